//! Closed token vocabulary shared by the prompter, the workers and the critic.
//!
//! Layout is fixed: structural markers first, then the control-token
//! subrange used by synthetic workers, then every other content token.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const CTX_BEGIN: &str = "<ctx>";
pub const CTX_END: &str = "</ctx>";
pub const HIST_BEGIN: &str = "<hist>";
pub const HIST_END: &str = "</hist>";
pub const MISSING: &str = "<missing>";
pub const FORBIDDEN: &str = "<forbidden>";
pub const ORDER: &str = "<order>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Markers {
    pub bos: TokenId,
    pub eos: TokenId,
    pub ctx_begin: TokenId,
    pub ctx_end: TokenId,
    pub hist_begin: TokenId,
    pub hist_end: TokenId,
    /// Reward-decile tokens `<r0>`..`<r9>`.
    pub reward: [TokenId; 10],
    pub missing: TokenId,
    pub forbidden: TokenId,
    pub order: TokenId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    markers: Markers,
    control: Range<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    control: Vec<String>,
    other: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;
    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.control, r.other)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            control: v.tokens[v.control.clone()].to_vec(),
            other: v.tokens[v.control.end..].to_vec(),
        }
    }
}

fn marker_names() -> Vec<String> {
    let mut names: Vec<String> = [BOS, EOS, CTX_BEGIN, CTX_END, HIST_BEGIN, HIST_END]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..10).map(|d| format!("<r{d}>")));
    names.extend([MISSING, FORBIDDEN, ORDER].iter().map(|s| s.to_string()));
    names
}

impl Vocabulary {
    /// Builds a vocabulary from control tokens and other content tokens.
    /// Marker tokens are prepended automatically.
    pub fn new(control: Vec<String>, other: Vec<String>) -> Result<Self> {
        let mut tokens = marker_names();
        let n_markers = tokens.len();
        let control_range = n_markers..n_markers + control.len();
        tokens.extend(control);
        tokens.extend(other);

        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::invalid(format!("empty token name at index {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token `{t}`")));
            }
        }
        let markers = Markers {
            bos: 0,
            eos: 1,
            ctx_begin: 2,
            ctx_end: 3,
            hist_begin: 4,
            hist_end: 5,
            reward: std::array::from_fn(|d| 6 + d),
            missing: 16,
            forbidden: 17,
            order: 18,
        };
        Ok(Vocabulary {
            tokens,
            index,
            markers,
            control: control_range,
        })
    }

    /// `n_control` tokens `c0..`, `n_filler` tokens `w0..` and
    /// `n_description` context-description tokens `d0..`.
    pub fn synthetic(n_control: usize, n_filler: usize, n_description: usize) -> Self {
        let control = (0..n_control).map(|i| format!("c{i}")).collect();
        let other = (0..n_filler)
            .map(|i| format!("w{i}"))
            .chain((0..n_description).map(|i| format!("d{i}")))
            .collect();
        Vocabulary::new(control, other).expect("synthetic names are distinct")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn markers(&self) -> &Markers {
        &self.markers
    }

    pub fn eos(&self) -> TokenId {
        self.markers.eos
    }

    pub fn control_range(&self) -> Range<TokenId> {
        self.control.clone()
    }

    /// Every non-marker token.
    pub fn content_range(&self) -> Range<TokenId> {
        self.control.start..self.tokens.len()
    }

    pub fn is_marker(&self, id: TokenId) -> bool {
        id < self.control.start
    }

    pub fn name(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<TokenId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<TokenId> {
        self.id(name)
            .ok_or_else(|| Error::invalid(format!("token `{name}` not in vocabulary")))
    }

    /// Decile token for a reward: `<r{floor(10 * min(r, 0.999))}>`.
    pub fn reward_token(&self, reward: f64) -> TokenId {
        let d = (10.0 * reward.clamp(0.0, 0.999)).floor() as usize;
        self.markers.reward[d.min(9)]
    }

    /// Space-joined rendering, skipping EOS.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != self.markers.eos)
            .map(|&id| self.name(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Whitespace tokenization that drops words outside the vocabulary
    /// and never yields markers.
    pub fn tokenize_lossy(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .filter_map(|w| self.id(w))
            .filter(|&id| !self.is_marker(id))
            .collect()
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update((self.control.end - self.control.start).to_le_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
