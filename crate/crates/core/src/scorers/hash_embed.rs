use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Locale, ScorerError, TokenEmbedder, TokenEmbedding};

pub const DEFAULT_DIM: usize = 768;

/// Deterministic word vectors built from seeded hashes of character
/// trigrams. Words sharing trigrams point in similar directions.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, DEFAULT_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { seed, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_word(&self, word: &str) -> TokenEmbedding {
        let normalized = normalize(word);
        let padded: Vec<char> = std::iter::once('<').chain(normalized.chars()).chain(std::iter::once('>')).collect();
        let mut acc = vec![0.0f64; self.dim];
        for gram in padded.windows(3) {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(gram, self.seed));
            for a in acc.iter_mut() {
                *a += rng.gen_range(-1.0..1.0);
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        TokenEmbedding(acc.into_iter().map(|x| x / norm).collect())
    }
}

fn normalize(word: &str) -> String {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    let base = if trimmed.is_empty() { word } else { trimmed };
    base.to_lowercase()
}

fn fnv1a(chars: &[char], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for c in chars {
        let mut buf = [0u8; 4];
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl TokenEmbedder for HashEmbedder {
    fn token_embeddings(&self, text: &str, _locale: Locale) -> Result<Vec<TokenEmbedding>, ScorerError> {
        Ok(text.split_whitespace().map(|w| self.embed_word(w)).collect())
    }
}
