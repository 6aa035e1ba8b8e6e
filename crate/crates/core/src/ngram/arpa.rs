//! ARPA text format.
//!
//! Probabilities and backoffs are log10 on disk and natural-log in memory.
//! The writer picks, for every value, a log10 decimal that converts back to
//! the exact in-memory f64, so parse/write/parse is lossless.

use std::f64::consts::LN_10;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{NGramEntry, NGramError, NGramModel, NGramModelBuilder};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("ARPA line {line}: {kind}")]
pub struct ArpaError {
    pub line: usize,
    pub kind: ArpaErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArpaErrorKind {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("{order}-gram count mismatch: declared {declared}, found {found}")]
    CountMismatch {
        order: usize,
        declared: usize,
        found: usize,
    },
    #[error("non-numeric field `{0}`")]
    BadNumber(String),
    #[error("malformed entry: {0}")]
    BadEntry(String),
    #[error("unexpected section `{0}`")]
    UnexpectedSection(String),
    #[error("missing \\end\\ marker")]
    MissingEnd,
    #[error("byte-order mark is not accepted")]
    ByteOrderMark,
    #[error("{0}")]
    Model(NGramError),
    #[error("I/O error: {0}")]
    Io(String),
}

fn err(line: usize, kind: ArpaErrorKind) -> ArpaError {
    ArpaError { line, kind }
}

fn parse_log10(field: &str, line: usize) -> Result<f64, ArpaError> {
    field
        .parse::<f64>()
        .map(|v| v * LN_10)
        .map_err(|_| err(line, ArpaErrorKind::BadNumber(field.to_owned())))
}

enum Section {
    Preamble,
    Header,
    Grams(usize),
    End,
}

pub fn parse_arpa_str(text: &str) -> Result<NGramModel, ArpaError> {
    parse_arpa(text.as_bytes())
}

pub fn parse_arpa<R: BufRead>(reader: R) -> Result<NGramModel, ArpaError> {
    let mut builder = NGramModelBuilder::new();
    let mut declared: Vec<usize> = Vec::new();
    let mut found = 0usize;
    let mut section = Section::Preamble;
    let mut line_no = 0usize;

    let close_section = |order: usize, found: usize, declared: &[usize], line: usize| {
        let want = declared[order - 1];
        if want != found {
            return Err(err(
                line,
                ArpaErrorKind::CountMismatch {
                    order,
                    declared: want,
                    found,
                },
            ));
        }
        Ok(())
    };

    for raw in reader.lines() {
        line_no += 1;
        let raw = raw.map_err(|e| err(line_no, ArpaErrorKind::Io(e.to_string())))?;
        if line_no == 1 && raw.starts_with('\u{feff}') {
            return Err(err(line_no, ArpaErrorKind::ByteOrderMark));
        }
        let line = raw.trim();

        match section {
            Section::Preamble => {
                if line == "\\data\\" {
                    section = Section::Header;
                }
            }
            Section::Header => {
                if line.is_empty() {
                    continue;
                }
                if let Some(rest) = line.strip_prefix("ngram ") {
                    let (n, count) = rest.split_once('=').ok_or_else(|| {
                        err(line_no, ArpaErrorKind::MalformedHeader(line.to_owned()))
                    })?;
                    let n: usize = n.trim().parse().map_err(|_| {
                        err(line_no, ArpaErrorKind::MalformedHeader(line.to_owned()))
                    })?;
                    let count: usize = count.trim().parse().map_err(|_| {
                        err(line_no, ArpaErrorKind::MalformedHeader(line.to_owned()))
                    })?;
                    if n != declared.len() + 1 {
                        return Err(err(
                            line_no,
                            ArpaErrorKind::MalformedHeader(format!(
                                "expected `ngram {}=`, got `{line}`",
                                declared.len() + 1
                            )),
                        ));
                    }
                    declared.push(count);
                } else if line == "\\1-grams:" {
                    if declared.is_empty() {
                        return Err(err(
                            line_no,
                            ArpaErrorKind::MalformedHeader("no `ngram N=count` lines".into()),
                        ));
                    }
                    section = Section::Grams(1);
                    found = 0;
                } else {
                    return Err(err(line_no, ArpaErrorKind::MalformedHeader(line.to_owned())));
                }
            }
            Section::Grams(order) => {
                if line.is_empty() {
                    continue;
                }
                if line.starts_with('\\') {
                    close_section(order, found, &declared, line_no)?;
                    if line == "\\end\\" {
                        if order != declared.len() {
                            return Err(err(
                                line_no,
                                ArpaErrorKind::UnexpectedSection(line.to_owned()),
                            ));
                        }
                        section = Section::End;
                    } else if line == format!("\\{}-grams:", order + 1) && order < declared.len() {
                        section = Section::Grams(order + 1);
                        found = 0;
                    } else {
                        return Err(err(line_no, ArpaErrorKind::UnexpectedSection(line.to_owned())));
                    }
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != order + 1 && fields.len() != order + 2 {
                    return Err(err(
                        line_no,
                        ArpaErrorKind::BadEntry(format!(
                            "{}-gram line has {} fields",
                            order,
                            fields.len()
                        )),
                    ));
                }
                let log_prob = parse_log10(fields[0], line_no)?;
                let backoff = match fields.get(order + 1) {
                    Some(f) => parse_log10(f, line_no)?,
                    None => 0.0,
                };
                builder
                    .add(&fields[1..=order], NGramEntry { log_prob, backoff })
                    .map_err(|e| err(line_no, ArpaErrorKind::Model(e)))?;
                found += 1;
            }
            Section::End => {
                if !line.is_empty() {
                    return Err(err(line_no, ArpaErrorKind::UnexpectedSection(line.to_owned())));
                }
            }
        }
    }

    match section {
        Section::End => Ok(builder.build()),
        Section::Preamble => Err(err(
            line_no,
            ArpaErrorKind::MalformedHeader("missing \\data\\".into()),
        )),
        _ => Err(err(line_no, ArpaErrorKind::MissingEnd)),
    }
}

/// Rounds a natural-log value onto the grid reachable from a log10 decimal,
/// so that it survives an ARPA write/parse cycle bit-exactly.
pub fn arpa_representable(ln_value: f64) -> f64 {
    (ln_value / LN_10) * LN_10
}

/// A log10 value that maps back to `ln_value` exactly under `x * LN_10`.
fn log10_repr(ln_value: f64) -> f64 {
    let guess = ln_value / LN_10;
    if !guess.is_finite() || guess * LN_10 == ln_value {
        return guess;
    }
    let bits = guess.to_bits();
    for delta in 1..=8u64 {
        for candidate in [f64::from_bits(bits + delta), f64::from_bits(bits - delta)] {
            if candidate * LN_10 == ln_value {
                return candidate;
            }
        }
    }
    guess
}

pub fn write_arpa<W: Write>(model: &NGramModel, mut out: W) -> io::Result<()> {
    let counts = model.counts();
    writeln!(out, "\\data\\")?;
    for (i, c) in counts.iter().enumerate() {
        writeln!(out, "ngram {}={}", i + 1, c)?;
    }
    let mut entries: Vec<_> = model.entries().collect();
    entries.sort_by_key(|(key, _)| key.len());
    let mut current = 0;
    for (key, entry) in entries {
        if key.len() != current {
            current = key.len();
            writeln!(out)?;
            writeln!(out, "\\{current}-grams:")?;
        }
        write!(out, "{}", log10_repr(entry.log_prob))?;
        for t in &key {
            write!(out, " {}", model.symbols().symbol(*t).unwrap_or("<unk>"))?;
        }
        if current < model.order() && entry.backoff != 0.0 {
            write!(out, " {}", log10_repr(entry.backoff))?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = "\
preamble text is ignored

\\data\\
ngram 1=4
ngram 2=3

\\1-grams:
-99 <s> -0.30103
-0.5228787 a -0.2
-0.5228787 b
-0.4771213 </s>

\\2-grams:
-0.1760913 <s> a
-0.30103 a b
-0.1249387 b </s>

\\end\\
";

    #[test]
    fn parses_fixture() {
        let m = parse_arpa_str(FIXTURE).unwrap();
        assert_eq!(m.order(), 2);
        assert_eq!(m.counts(), vec![4, 3]);
        let a = m.token("a").unwrap();
        let e = m.entry(&[a]).unwrap();
        assert!((e.log_prob - (-0.5228787 * LN_10)).abs() < 1e-12);
        assert!((e.backoff - (-0.2 * LN_10)).abs() < 1e-12);
        let b = m.token("b").unwrap();
        assert_eq!(m.entry(&[b]).unwrap().backoff, 0.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn minimal_unigram_converts_log10_to_ln() {
        let m = parse_arpa_str("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.30103 a\n\n\\end\\\n").unwrap();
        let a = m.token("a").unwrap();
        let lp = m.entry(&[a]).unwrap().log_prob;
        // -0.30103 is log10(0.5) to 5 digits
        assert!((lp - (-0.30103 * LN_10)).abs() < 1e-12);
        assert!((lp - 0.5f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let text = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3 a\n-0.3 b\n\n\\end\\\n";
        let e = parse_arpa_str(text).unwrap_err();
        assert_eq!(
            e.kind,
            ArpaErrorKind::CountMismatch {
                order: 1,
                declared: 3,
                found: 2
            }
        );
        assert_eq!(e.line, 8);
    }

    #[test]
    fn non_numeric_field_has_line_number() {
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3 a\nfoo b\n\n\\end\\\n";
        let e = parse_arpa_str(text).unwrap_err();
        assert_eq!(e.line, 6);
        assert_eq!(e.kind, ArpaErrorKind::BadNumber("foo".into()));
    }

    #[test]
    fn missing_prefix_is_reported() {
        let text = "\\data\\\nngram 1=2\nngram 2=0\nngram 3=1\n\n\\1-grams:\n-0.3 a\n-0.3 b\n\n\\2-grams:\n\n\\3-grams:\n-0.1 a b a\n\n\\end\\\n";
        let e = parse_arpa_str(text).unwrap_err();
        assert_eq!(e.line, 13);
        assert!(matches!(e.kind, ArpaErrorKind::Model(NGramError::MissingPrefix(_))));
    }

    #[test]
    fn malformed_header() {
        let e = parse_arpa_str("\\data\\\nngram one=2\n").unwrap_err();
        assert!(matches!(e.kind, ArpaErrorKind::MalformedHeader(_)));
        let e = parse_arpa_str("no data marker\n").unwrap_err();
        assert!(matches!(e.kind, ArpaErrorKind::MalformedHeader(_)));
        let e = parse_arpa_str("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3 a\n").unwrap_err();
        assert_eq!(e.kind, ArpaErrorKind::MissingEnd);
    }

    #[test]
    fn bom_is_rejected() {
        let e = parse_arpa_str("\u{feff}\\data\\\n").unwrap_err();
        assert_eq!(e.kind, ArpaErrorKind::ByteOrderMark);
    }

    #[test]
    fn order_is_highest_populated_section() {
        let text = "\\data\\\nngram 1=1\nngram 2=0\n\n\\1-grams:\n-0.3 a -0.1\n\n\\2-grams:\n\n\\end\\\n";
        let m = parse_arpa_str(text).unwrap();
        assert_eq!(m.order(), 1);
        // sole order: backoff dropped
        assert_eq!(m.entry(&[m.token("a").unwrap()]).unwrap().backoff, 0.0);
    }

    #[test]
    fn fixture_round_trips() {
        let m = parse_arpa_str(FIXTURE).unwrap();
        let mut buf = Vec::new();
        write_arpa(&m, &mut buf).unwrap();
        let again = parse_arpa(&buf[..]).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.entry_map(), again.entry_map());
    }

    proptest! {
        #[test]
        fn log10_repr_is_exact(ln in -300.0f64..0.0) {
            let snapped = arpa_representable(ln);
            let r = log10_repr(snapped);
            prop_assert_eq!(r * LN_10, snapped);
            prop_assert_eq!(format!("{r}").parse::<f64>().unwrap() * LN_10, snapped);
        }
    }
}
