//! Text-to-vector encoders: a deterministic signed-hashing encoder for
//! offline use, and a client for a remote embedding service. Both sit
//! behind the [`TextEncoder`] trait; embeddings are computed once and
//! cached, no gradient ever reaches the encoder.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{LectError, Result};
use crate::seeds;

/// Row-per-node embedding matrix (original nodes first, then pseudo nodes).
pub type EmbeddingMatrix = Array2<f64>;

pub trait TextEncoder {
    fn dim(&self) -> usize;
    /// Deterministic per encoder instance; output length is always `dim()`.
    fn encode(&self, text: &str) -> Result<Vec<f64>>;
    /// Identifier used in cache keys.
    fn id(&self) -> String;
}

/// Signed feature-hashing encoder: lowercase tokens on non-alphanumeric
/// boundaries, each token mapped to a bucket with a ±1 sign, accumulated
/// and L2-normalized (the all-zero vector stays all-zero).
#[derive(Debug, Clone)]
pub struct HashEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(LectError::InvalidConfig("hash encoder dim must be >= 1".into()));
        }
        Ok(Self { dim, seed })
    }
}

/// Hash one text into a signed bag-of-buckets vector.
pub fn hash_encode(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0f64; dim];
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let lower = token.to_lowercase();
        let mut state = seeds::fnv1a(lower.as_bytes()) ^ seed;
        let h = seeds::splitmix64(&mut state);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

impl TextEncoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(hash_encode(text, self.dim, self.seed))
    }

    fn id(&self) -> String {
        format!("hash-d{}-s{}", self.dim, self.seed)
    }
}

/// Encode every text; row i of the result is `encoder.encode(texts[i])`.
pub fn encode_all(texts: &[String], encoder: &dyn TextEncoder) -> Result<EmbeddingMatrix> {
    let dim = encoder.dim();
    let mut out = Array2::zeros((texts.len(), dim));
    for (i, text) in texts.iter().enumerate() {
        let row = encoder
            .encode(text)
            .map_err(|e| LectError::Encode { node: i, reason: e.to_string() })?;
        if row.len() != dim {
            return Err(LectError::Encode {
                node: i,
                reason: format!("dimension mismatch: got {}, expected {dim}", row.len()),
            });
        }
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(LectError::Encode {
                    node: i,
                    reason: format!("non-finite value at component {j}"),
                });
            }
            out[[i, j]] = x;
        }
    }
    Ok(out)
}

/// Client for a remote embedding service speaking the
/// `{"input": [...]} -> {"data": [{"embedding": [...]}]}` wire shape.
pub struct RemoteEncoder {
    pub endpoint: String,
    pub dim: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub token: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(serde::Serialize)]
struct EmbedRequest<'a> {
    input: &'a [String],
}

#[derive(serde::Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedRow>,
}

#[derive(serde::Deserialize)]
struct EmbedRow {
    embedding: Vec<f64>,
}

impl RemoteEncoder {
    pub fn new(
        endpoint: String,
        dim: usize,
        batch_size: usize,
        max_retries: u32,
        backoff_ms: u64,
        token: Option<String>,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(LectError::InvalidConfig("batch_size must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| LectError::Remote(e.to_string()))?;
        Ok(Self { endpoint, dim, batch_size, max_retries, backoff_ms, token, client })
    }

    fn post_batch(&self, batch: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(&self.endpoint).json(&EmbedRequest { input: batch });
            if let Some(tok) = &self.token {
                req = req.bearer_auth(tok);
            }
            let outcome = req.send().and_then(|r| r.error_for_status());
            match outcome {
                Ok(resp) => {
                    let parsed: EmbedResponse =
                        resp.json().map_err(|e| LectError::Remote(format!("bad body: {e}")))?;
                    if parsed.data.len() != batch.len() {
                        return Err(LectError::Remote(format!(
                            "response count mismatch: got {} embeddings for {} texts",
                            parsed.data.len(),
                            batch.len()
                        )));
                    }
                    return Ok(parsed.data.into_iter().map(|r| r.embedding).collect());
                }
                Err(e) => {
                    if attempt >= self.max_retries {
                        let status = e
                            .status()
                            .map(|s| format!("HTTP {s}"))
                            .unwrap_or_else(|| e.to_string());
                        return Err(LectError::Remote(format!(
                            "failed after {} attempts: {status}",
                            attempt + 1
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(self.backoff_ms << attempt));
                    attempt += 1;
                }
            }
        }
    }

    /// Encode a batch of texts, issuing POSTs of at most `batch_size` each,
    /// preserving input order.
    pub fn encode_batch(&self, texts: &[String]) -> Result<EmbeddingMatrix> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            rows.extend(self.post_batch(chunk)?);
        }
        let mut out = Array2::zeros((texts.len(), self.dim));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.dim {
                return Err(LectError::Encode {
                    node: i,
                    reason: format!("dimension mismatch: got {}, expected {}", row.len(), self.dim),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                out[[i, j]] = x;
            }
        }
        Ok(out)
    }
}

impl TextEncoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let m = self.encode_batch(std::slice::from_ref(&text.to_string()))?;
        Ok(m.row(0).to_vec())
    }

    fn id(&self) -> String {
        format!("remote-d{}", self.dim)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"LECTEMB1";

/// Write an embedding matrix to the binary cache format:
/// magic, rows, cols, seed (u64 LE each), then f32 LE values row-major.
pub fn write_cache(path: &Path, matrix: &EmbeddingMatrix, seed: u64) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_u64::<LittleEndian>(matrix.nrows() as u64)?;
    f.write_u64::<LittleEndian>(matrix.ncols() as u64)?;
    f.write_u64::<LittleEndian>(seed)?;
    for &x in matrix.iter() {
        f.write_f32::<LittleEndian>(x as f32)?;
    }
    f.flush()?;
    Ok(())
}

/// Read a cached embedding matrix; returns the matrix and the stored seed.
pub fn read_cache(path: &Path) -> Result<(EmbeddingMatrix, u64)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(LectError::Other(format!("bad embedding cache magic in {}", path.display())));
    }
    let rows = f.read_u64::<LittleEndian>()? as usize;
    let cols = f.read_u64::<LittleEndian>()? as usize;
    let seed = f.read_u64::<LittleEndian>()?;
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            out[[i, j]] = f.read_f32::<LittleEndian>()? as f64;
        }
    }
    Ok((out, seed))
}

/// Cache file name keyed by graph hash, encoder id, dim and seed.
pub fn cache_file_name(graph_hash: u64, encoder_id: &str, dim: usize, seed: u64) -> String {
    format!("emb-{graph_hash:016x}-{encoder_id}-d{dim}-s{seed}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero_vector() {
        let v = hash_encode("", 8, 1);
        assert_eq!(v, vec![0.0; 8]);
    }

    #[test]
    fn encoding_is_deterministic() {
        assert_eq!(hash_encode("graph energy", 32, 7), hash_encode("graph energy", 32, 7));
        assert_ne!(hash_encode("graph energy", 32, 7), hash_encode("graph energy", 32, 8));
    }

    #[test]
    fn repeated_token_keeps_direction() {
        let a = hash_encode("graph graph", 16, 3);
        let b = hash_encode("graph", 16, 3);
        // both normalized and in the same single bucket
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_is_zero_or_one() {
        for text in ["", "one", "a b c d e", "mixed CASE tokens, punct!"] {
            let v = hash_encode(text, 64, 11);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12, "norm {n} for {text:?}");
        }
    }

    #[test]
    fn tokenization_is_case_and_punct_insensitive() {
        let a = hash_encode("Graph, Energy!", 64, 5);
        let b = hash_encode("graph energy", 64, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn encode_all_shape_and_order() {
        let enc = HashEncoder::new(4, 0).unwrap();
        let texts: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let m = encode_all(&texts, &enc).unwrap();
        assert_eq!(m.shape(), &[3, 4]);
        assert_eq!(m.row(1).to_vec(), enc.encode("b").unwrap());

        let permuted: Vec<String> = vec!["c".into(), "a".into(), "b".into()];
        let mp = encode_all(&permuted, &enc).unwrap();
        assert_eq!(mp.row(0).to_vec(), m.row(2).to_vec());
    }

    struct BadDimEncoder;
    impl TextEncoder for BadDimEncoder {
        fn dim(&self) -> usize {
            4
        }
        fn encode(&self, _text: &str) -> Result<Vec<f64>> {
            Ok(vec![0.0; 3])
        }
        fn id(&self) -> String {
            "bad".into()
        }
    }

    #[test]
    fn encode_all_rejects_wrong_dimension() {
        let texts: Vec<String> = vec!["a".into()];
        let err = encode_all(&texts, &BadDimEncoder).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let m = ndarray::array![[1.0, 2.5], [-0.25, 0.0], [3.0, -1.5]];
        write_cache(&path, &m, 42).unwrap();
        let (back, seed) = read_cache(&path).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(back, m);
    }
}
