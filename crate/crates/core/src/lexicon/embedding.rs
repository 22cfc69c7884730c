use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vector for `{word}` has length {found}, expected {expected}")]
    Dimension {
        word: String,
        found: usize,
        expected: usize,
    },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("corpus has no tokens")]
    EmptyCorpus,
}

/// Word vectors keyed by surface form, all of one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingProvider {
    pub fn from_vectors<I>(dim: usize, rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut vectors = HashMap::new();
        for (word, v) in rows {
            if v.len() != dim {
                return Err(EmbeddingError::Dimension {
                    word,
                    found: v.len(),
                    expected: dim,
                });
            }
            vectors.insert(word.to_lowercase(), v);
        }
        Ok(Self { dim, vectors })
    }

    /// Parse `token v1 v2 ... vd` lines. The dimension is fixed by the first row.
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut dim = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(EmbeddingError::Parse {
                    line: i + 1,
                    message: format!("expected {d} components, found {}", v.len()),
                });
            }
            rows.push((word.to_string(), v));
        }
        Self::from_vectors(dim.unwrap_or(0), rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes rows sorted by token; `{:?}` keeps f64 values round-trippable.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let sorted: BTreeMap<_, _> = self.vectors.iter().collect();
        for (word, v) in sorted {
            write!(out, "{word}")?;
            for x in v {
                write!(out, " {x:?}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// Cosine similarity; `None` when either vector is zero.
    pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
    }

    /// PPMI co-occurrence vectors (symmetric window) reduced to rank `k` by
    /// SVD; each word's vector is its row of `U_k * sqrt(S_k)`.
    pub fn from_corpus<S: AsRef<[String]>>(
        sentences: &[S],
        window: usize,
        k: usize,
    ) -> Result<Self, EmbeddingError> {
        if k == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for w in s.as_ref() {
                vocab.entry(w.as_str()).or_insert(0);
            }
        }
        if vocab.is_empty() {
            return Err(EmbeddingError::EmptyCorpus);
        }
        for (i, v) in vocab.values_mut().enumerate() {
            *v = i;
        }
        let n = vocab.len();
        let mut counts = DMatrix::<f64>::zeros(n, n);
        for s in sentences {
            let ids: Vec<usize> = s.as_ref().iter().map(|w| vocab[w.as_str()]).collect();
            for (i, &a) in ids.iter().enumerate() {
                let hi = (i + window + 1).min(ids.len());
                for &b in &ids[i + 1..hi] {
                    counts[(a, b)] += 1.0;
                    counts[(b, a)] += 1.0;
                }
            }
        }
        let total: f64 = counts.sum();
        let row_sums: Vec<f64> = (0..n).map(|r| counts.row(r).sum()).collect();
        let mut ppmi = DMatrix::<f64>::zeros(n, n);
        if total > 0.0 {
            for r in 0..n {
                for c in 0..n {
                    let joint = counts[(r, c)];
                    if joint > 0.0 {
                        let pmi = (joint * total / (row_sums[r] * row_sums[c])).ln();
                        ppmi[(r, c)] = pmi.max(0.0);
                    }
                }
            }
        }
        let svd = ppmi.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let k = k.min(order.len());
        let rows = vocab.iter().map(|(w, &r)| {
            let v: Vec<f64> = order[..k]
                .iter()
                .map(|&c| u[(r, c)] * svd.singular_values[c].sqrt())
                .collect();
            (w.to_string(), v)
        });
        Self::from_vectors(k, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_ragged_rows() {
        assert!(EmbeddingProvider::parse("a 1 2\nb 1\n").is_err());
        let e = EmbeddingProvider::parse("a 1 2\nb 3 4\n").unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(e.get("B"), Some(&[3.0, 4.0][..]));
    }

    #[test]
    fn cosine_zero_vector_undefined() {
        assert_eq!(EmbeddingProvider::cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
        let c = EmbeddingProvider::cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ppmi_groups_distributional_neighbours() {
        let raw = [
            "she ordered a drink", "he ordered a drink", "she bought a drink", "he bought a drink",
            "she hiked the trail", "he walked the trail", "she hiked the path", "he walked the path",
        ];
        let sents: Vec<Vec<String>> = raw
            .iter()
            .map(|s| s.split(' ').map(String::from).collect())
            .collect();
        let e = EmbeddingProvider::from_corpus(&sents, 2, 4).unwrap();
        let sim = |a: &str, b: &str| EmbeddingProvider::cosine(e.get(a).unwrap(), e.get(b).unwrap()).unwrap();
        assert!(sim("ordered", "bought") > sim("ordered", "hiked"));
        assert!(sim("hiked", "walked") > sim("hiked", "bought"));
    }

    #[test]
    fn save_load_round_trip() {
        let e = EmbeddingProvider::from_vectors(2, [("x".to_string(), vec![0.1, 1.0 / 3.0])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        e.save(&p).unwrap();
        let back = EmbeddingProvider::load(&p).unwrap();
        assert_eq!(back.get("x"), e.get("x"));
    }
}
