//! Acoustic score sources for the decoders.
//!
//! Frame mode reads a `T x N` matrix of natural-log scores whose last column
//! is blank. Label mode reads the same matrix layout with the end-of-sequence
//! score in the last column and one row per output position, or a table of
//! per-prefix expansion scores.


use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::DecodeError;

pub const BLANK_SYMBOL: &str = "<blank>";
pub const END_SYMBOL: &str = "</s>";

/// Dense row-major score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PosteriorMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DecodeError> {
        if data.len() != rows * cols {
            return Err(DecodeError::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(PosteriorMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Parses `T N` followed by `T` lines of `N` floats.
    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        reject_bom(text)?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| DecodeError::parse(1, "missing `T N` header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|f| f.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| DecodeError::parse(1, format!("bad header: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(DecodeError::parse(1, "header must be `T N`"));
        };
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines {
            seen += 1;
            if seen > rows {
                return Err(DecodeError::Dimension(format!(
                    "line {}: more than {rows} rows",
                    i + 1
                )));
            }
            let before = data.len();
            for field in line.split_whitespace() {
                let v = parse_score(field).map_err(|m| DecodeError::parse(i + 1, m))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(DecodeError::Dimension(format!(
                    "line {}: expected {cols} columns, found {}",
                    i + 1,
                    data.len() - before
                )));
            }
        }
        if seen != rows {
            return Err(DecodeError::Dimension(format!(
                "expected {rows} rows, found {seen}"
            )));
        }
        PosteriorMatrix::new(rows, cols, data)
    }

    pub fn write(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn parse_score(field: &str) -> Result<f64, String> {
    match field {
        "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
        _ => match field.parse::<f64>() {
            Ok(v) if v.is_nan() || v == f64::INFINITY => Err(format!("score `{field}` is not allowed")),
            Ok(v) => Ok(v),
            Err(_) => Err(format!("bad number `{field}`")),
        },
    }
}

fn reject_bom(text: &str) -> Result<(), DecodeError> {
    if text.starts_with('\u{feff}') {
        return Err(DecodeError::parse(1, "byte-order mark is not accepted"));
    }
    Ok(())
}

/// One token per line; the index of a token is its line number.
pub fn parse_token_table(text: &str) -> Result<Vec<String>, DecodeError> {
    reject_bom(text)?;
    let tokens: Vec<String> = text.lines().map(|l| l.trim().to_owned()).collect();
    let end = tokens.iter().rposition(|t| !t.is_empty()).map_or(0, |p| p + 1);
    let tokens = tokens[..end].to_vec();
    if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
        return Err(DecodeError::parse(i + 1, "empty token"));
    }
    if tokens.is_empty() {
        return Err(DecodeError::parse(1, "empty token table"));
    }
    Ok(tokens)
}

/// Expansion scores for one label-synchronous step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores {
    /// one per token, `-inf` for no expansion
    pub tokens: Vec<f64>,
    /// score of ending here
    pub end: f64,
}

/// Label-synchronous score source.
pub trait LabelOracle: Sync {
    /// Output tokens, excluding the end marker.
    fn tokens(&self) -> &[String];

    /// Longest output length considered.
    fn max_len(&self) -> usize;

    fn scores(&self, prefix: &[usize]) -> LabelScores;
}

/// Label scores that depend only on the output position. Row `m` scores the
/// token at position `m`; the last column is the end score. A prefix as long
/// as the matrix ends with score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLabelOracle {
    tokens: Vec<String>,
    matrix: PosteriorMatrix,
}

impl MatrixLabelOracle {
    /// `table` lists the tokens and ends with [`END_SYMBOL`].
    pub fn new(table: Vec<String>, matrix: PosteriorMatrix) -> Result<Self, DecodeError> {
        check_table(&table, &matrix, END_SYMBOL)?;
        let mut tokens = table;
        tokens.pop();
        Ok(MatrixLabelOracle { tokens, matrix })
    }

    pub fn matrix(&self) -> &PosteriorMatrix {
        &self.matrix
    }
}

fn check_table(table: &[String], matrix: &PosteriorMatrix, last: &str) -> Result<(), DecodeError> {
    if table.len() != matrix.cols() {
        return Err(DecodeError::Dimension(format!(
            "token table has {} entries, matrix has {} columns",
            table.len(),
            matrix.cols()
        )));
    }
    if table.last().map(String::as_str) != Some(last) {
        return Err(DecodeError::Dimension(format!(
            "last token must be `{last}`"
        )));
    }
    Ok(())
}

impl LabelOracle for MatrixLabelOracle {
    fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn max_len(&self) -> usize {
        self.matrix.rows()
    }

    fn scores(&self, prefix: &[usize]) -> LabelScores {
        let m = prefix.len();
        if m >= self.matrix.rows() {
            return LabelScores {
                tokens: vec![f64::NEG_INFINITY; self.tokens.len()],
                end: 0.0,
            };
        }
        let row = self.matrix.row(m);
        LabelScores {
            tokens: row[..self.tokens.len()].to_vec(),
            end: row[self.tokens.len()],
        }
    }
}

/// Label scores looked up per prefix; missing entries are `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLabelOracle {
    tokens: Vec<String>,
    index: FxHashMap<String, usize>,
    table: FxHashMap<Vec<usize>, LabelScores>,
    max_len: usize,
}

impl TableLabelOracle {
    /// Parses `prefix<TAB>token<TAB>score` lines. The prefix is
    /// space-separated tokens (empty for the start); [`END_SYMBOL`] as token
    /// scores ending after the prefix.
    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        reject_bom(text)?;
        let mut tokens = Vec::new();
        let mut index: FxHashMap<String, usize> = FxHashMap::default();
        let mut rows: Vec<(Vec<String>, String, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [prefix, token, score] = fields[..] else {
                return Err(DecodeError::parse(i + 1, "expected 3 tab-separated fields"));
            };
            let prefix: Vec<String> = prefix.split_whitespace().map(str::to_owned).collect();
            let token = token.trim().to_owned();
            let score = parse_score(score.trim()).map_err(|m| DecodeError::parse(i + 1, m))?;
            for t in prefix.iter().chain(std::iter::once(&token)) {
                if t != END_SYMBOL && !index.contains_key(t) {
                    index.insert(t.clone(), tokens.len());
                    tokens.push(t.clone());
                }
            }
            if prefix.iter().any(|t| t == END_SYMBOL) {
                return Err(DecodeError::parse(i + 1, "end marker inside a prefix"));
            }
            rows.push((prefix, token, score));
        }
        let mut table: FxHashMap<Vec<usize>, LabelScores> = FxHashMap::default();
        let mut max_len = 0;
        for (prefix, token, score) in rows {
            let key: Vec<usize> = prefix.iter().map(|t| index[t]).collect();
            let entry = table.entry(key.clone()).or_insert_with(|| LabelScores {
                tokens: vec![f64::NEG_INFINITY; tokens.len()],
                end: f64::NEG_INFINITY,
            });
            if token == END_SYMBOL {
                entry.end = score;
                max_len = max_len.max(key.len());
            } else {
                entry.tokens[index[&token]] = score;
                max_len = max_len.max(key.len() + 1);
            }
        }
        Ok(TableLabelOracle {
            tokens,
            index,
            table,
            max_len,
        })
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

impl LabelOracle for TableLabelOracle {
    fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn scores(&self, prefix: &[usize]) -> LabelScores {
        self.table.get(prefix).cloned().unwrap_or_else(|| LabelScores {
            tokens: vec![f64::NEG_INFINITY; self.tokens.len()],
            end: f64::NEG_INFINITY,
        })
    }
}

/// Frame-synchronous score source: per-frame scores with blank last.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOracle {
    tokens: Vec<String>,
    matrix: PosteriorMatrix,
}

impl FrameOracle {
    /// `table` lists the tokens and ends with [`BLANK_SYMBOL`].
    pub fn new(table: Vec<String>, matrix: PosteriorMatrix) -> Result<Self, DecodeError> {
        check_table(&table, &matrix, BLANK_SYMBOL)?;
        let mut tokens = table;
        tokens.pop();
        Ok(FrameOracle { tokens, matrix })
    }

    /// Non-blank tokens.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frames(&self) -> usize {
        self.matrix.rows()
    }

    pub fn blank(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn score(&self, frame: usize, token: usize) -> f64 {
        self.matrix.get(frame, token)
    }

    pub fn matrix(&self) -> &PosteriorMatrix {
        &self.matrix
    }
}

/// Log-softmax rows of peaks plus uniform noise in `[0, noise)`.
fn noisy_rows(peaks: &[Vec<usize>], cols: usize, peak: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut data = Vec::with_capacity(peaks.len() * cols);
    for p in peaks {
        let logits: Vec<f64> = (0..cols)
            .map(|k| if p.contains(&k) { peak } else { 0.0 } + noise * rng.gen::<f64>())
            .collect();
        let z = logits.iter().copied().fold(f64::NEG_INFINITY, crate::wfsa::log_add);
        data.extend(logits.iter().map(|v| v - z));
    }
    data
}

/// Frame-mode scores for `reference` (token indices): every token gets
/// `frames_per_token` frames, peaked on the token in the first and on blank
/// in the rest.
pub fn synthetic_frame_matrix(
    reference: &[usize],
    num_tokens: usize,
    frames_per_token: usize,
    peak: f64,
    noise: f64,
    seed: u64,
) -> PosteriorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = num_tokens + 1;
    let mut peaks = Vec::new();
    for &r in reference {
        peaks.push(vec![r]);
        peaks.extend(std::iter::repeat_n(vec![num_tokens], frames_per_token.saturating_sub(1)));
    }
    let data = noisy_rows(&peaks, cols, peak, noise, &mut rng);
    PosteriorMatrix::new(peaks.len(), cols, data).expect("sized by construction")
}

/// Label-mode scores for `reference`: row `m` peaks on `reference[m]`, the
/// final row on the end column.
pub fn synthetic_label_matrix(
    reference: &[usize],
    num_tokens: usize,
    peak: f64,
    noise: f64,
    seed: u64,
) -> PosteriorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut peaks: Vec<Vec<usize>> = reference.iter().map(|&r| vec![r]).collect();
    peaks.push(vec![num_tokens]);
    let data = noisy_rows(&peaks, num_tokens + 1, peak, noise, &mut rng);
    PosteriorMatrix::new(peaks.len(), num_tokens + 1, data).expect("sized by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = PosteriorMatrix::parse("2 3\n-0.1 -2 -3\n-1 -0.5 -inf\n").unwrap();
        assert_eq!(m.get(1, 2), f64::NEG_INFINITY);
        assert_eq!(PosteriorMatrix::parse(&m.write()).unwrap(), m);
    }

    #[test]
    fn matrix_dimension_errors() {
        assert!(matches!(
            PosteriorMatrix::parse("2 2\n0 0\n"),
            Err(DecodeError::Dimension(_))
        ));
        assert!(matches!(
            PosteriorMatrix::parse("1 2\n0 0 0\n"),
            Err(DecodeError::Dimension(_))
        ));
        assert!(matches!(
            PosteriorMatrix::parse("1 2\n0 x\n"),
            Err(DecodeError::Parse { line: 2, .. })
        ));
        assert!(PosteriorMatrix::parse("\u{feff}1 1\n0\n").is_err());
    }

    #[test]
    fn token_table_and_frame_oracle() {
        let table = parse_token_table("a\nb\n<blank>\n\n").unwrap();
        assert_eq!(table.len(), 3);
        let m = PosteriorMatrix::parse("1 3\n-1 -2 -0.1\n").unwrap();
        let o = FrameOracle::new(table.clone(), m.clone()).unwrap();
        assert_eq!(o.blank(), 2);
        assert_eq!(o.score(0, 2), -0.1);
        assert!(FrameOracle::new(table[..2].to_vec(), m.clone()).is_err());
        assert!(MatrixLabelOracle::new(table, m).is_err());
    }

    #[test]
    fn table_oracle() {
        let o = TableLabelOracle::parse("\ta\t-0.1\n\tb\t-2\na\t</s>\t-0.3\na\tb\t-1\n").unwrap();
        assert_eq!(o.tokens(), ["a", "b"]);
        assert_eq!(o.max_len(), 2);
        let root = o.scores(&[]);
        assert_eq!(root.tokens, vec![-0.1, -2.0]);
        assert_eq!(root.end, f64::NEG_INFINITY);
        assert_eq!(o.scores(&[0]).end, -0.3);
        assert_eq!(o.scores(&[1]).tokens, vec![f64::NEG_INFINITY; 2]);
        assert!(TableLabelOracle::parse("a\tb\n").is_err());
    }

    #[test]
    fn synthetic_is_seeded_and_normalized() {
        let a = synthetic_frame_matrix(&[0, 2, 1], 3, 2, 5.0, 1.0, 7);
        let b = synthetic_frame_matrix(&[0, 2, 1], 3, 2, 5.0, 1.0, 7);
        assert_eq!(a, b);
        assert_eq!((a.rows(), a.cols()), (6, 4));
        for r in 0..a.rows() {
            let mass: f64 = a.row(r).iter().map(|v| v.exp()).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
        let l = synthetic_label_matrix(&[1, 0], 2, 5.0, 0.5, 1);
        assert_eq!((l.rows(), l.cols()), (3, 3));
    }
}
