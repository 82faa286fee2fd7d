use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Example, LabelSpace};
use crate::error::{Error, Result};

/// Reads `{"id", "tokens", "labels"}` objects, one per line. With a label
/// space every label must already be in it; without one, the space is built
/// from this file (sorted lexicographically).
pub fn load_jsonl(
    path: impl AsRef<Path>,
    label_space: Option<&LabelSpace>,
) -> Result<(Vec<Example>, LabelSpace)> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let ex: Example = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if ex.tokens.is_empty() {
            return Err(parse_err(format!("example `{}` has no tokens", ex.id)));
        }
        if let Some(ls) = label_space {
            if let Some(bad) = ex.labels.iter().find(|l| ls.index_of(l).is_none()) {
                return Err(parse_err(format!(
                    "label `{bad}` of example `{}` is not in the label space",
                    ex.id
                )));
            }
        }
        examples.push(ex);
    }
    if examples.is_empty() {
        return Err(Error::Data(format!("{}: no examples", path.display())));
    }
    let space = match label_space {
        Some(ls) => ls.clone(),
        None => LabelSpace::from_examples(&examples),
    };
    Ok((examples, space))
}

pub fn save_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut f, ex)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
