use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::uniform;
use crate::tensor::{Scalar, Tensor};
use crate::text::Vocabulary;

/// Word vectors for every vocabulary row.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T> {
    pub table: Tensor<T>,
    pub trainable: bool,
    /// Vocabulary rows filled from the file.
    pub found: usize,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn width(&self) -> usize {
        self.table.shape()[1]
    }
}

/// Reads a word-vector text file (`word v1 … vd` per line, optional
/// `count dim` header). Vocabulary words missing from the file get
/// uniform(−0.1, 0.1) rows.
pub fn load_embeddings<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    rng: &mut impl Rng,
) -> Result<EmbeddingTable<T>> {
    let reader = BufReader::new(File::open(path)?);
    let format_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut width: Option<usize> = None;
    let mut rows: Vec<Option<Vec<T>>> = vec![None; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let dim = fields.len() - 1;
        if dim == 0 {
            return Err(format_err(lineno, "line has a word but no vector".into()));
        }
        match width {
            None => width = Some(dim),
            Some(w) if w != dim => {
                return Err(format_err(
                    lineno,
                    format!("vector width {dim}, expected {w}"),
                ))
            }
            _ => {}
        }
        let Some(id) = vocab.id(fields[0]) else { continue };
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| format_err(lineno, format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        rows[id] = Some(values);
    }
    let width = width.ok_or_else(|| format_err(0, "no vectors in file".into()))?;
    let mut data = Vec::with_capacity(vocab.len() * width);
    let mut found = 0;
    for row in rows {
        match row {
            Some(v) => {
                found += 1;
                data.extend(v);
            }
            None => data.extend(uniform::<T>(&[width], 0.1, rng).into_data()),
        }
    }
    Ok(EmbeddingTable {
        table: Tensor::new(&[vocab.len(), width], data)?,
        trainable: true,
        found,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn vocab() -> Vocabulary {
        let toks: Vec<String> = ["hello", "world"].iter().map(|s| s.to_string()).collect();
        Vocabulary::build([toks.as_slice()], 100).unwrap()
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn copies_rows_and_fills_missing() {
        let v = vocab();
        let f = file("2 2\nhello 0.1 0.2\nother 1 1\n");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = load_embeddings::<f64>(f.path(), &v, &mut rng).unwrap();
        assert_eq!(e.width(), 2);
        assert_eq!(e.found, 1);
        assert!(e.trainable);
        let rows: Vec<&[f64]> = e.table.rows().collect();
        assert_eq!(rows[v.id("hello").unwrap()], &[0.1, 0.2]);
        let w = rows[v.id("world").unwrap()];
        assert!(w.iter().all(|x| x.abs() < 0.1));
    }

    #[test]
    fn inconsistent_width_names_line() {
        let f = file("hello 0.1 0.2\nworld 0.3\n");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match load_embeddings::<f64>(f.path(), &vocab(), &mut rng) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
