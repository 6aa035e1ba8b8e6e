use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Reads a UTF-8 text file; a byte-order mark is an error.
pub fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(CliError::parse(path.display().to_string(), "byte-order mark is not accepted"));
    }
    String::from_utf8(bytes).map_err(|e| CliError::parse(path.display().to_string(), e))
}

pub fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::io(p, e)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(content.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}
