//! Vocabulary models and text to token-id encoding.
//!
//! The built-in engine is a greedy BPE: the text becomes a sequence of
//! initial symbols (bytes remapped to printable characters for byte-level
//! models, Unicode scalar values otherwise) and merges are applied one at a
//! time, always the lowest-ranked adjacent pair, leftmost on ties, until no
//! rule applies. Tokenizers that cannot be reproduced this way can be
//! plugged in through pre-tokenized id files.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};

/// Bytes that are printable in Latin-1 keep their code point; the remaining
/// 68 are shifted to U+0100 and up, in byte order.
pub fn byte_to_unicode() -> &'static [char; 256] {
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = ['\0'; 256];
        let mut extra = 0u32;
        for b in 0..=255u8 {
            let keep = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
            table[b as usize] = if keep {
                char::from(b)
            } else {
                let c = char::from_u32(256 + extra).expect("valid code point");
                extra += 1;
                c
            };
        }
        table
    })
}

fn unicode_to_byte() -> &'static HashMap<char, u8> {
    static TABLE: OnceLock<HashMap<char, u8>> = OnceLock::new();
    TABLE.get_or_init(|| {
        byte_to_unicode()
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect()
    })
}

/// How text is cut into chunks before merges run. Merges never cross a
/// chunk boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreSplit {
    /// The whole text is one chunk.
    #[default]
    None,
    /// Each chunk is a run of non-whitespace with the preceding whitespace
    /// attached, the way GPT-style tokenizers glue a space onto the next word.
    Whitespace,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabOptions {
    pub byte_level: bool,
    pub unk_token: Option<String>,
    /// Token strings excluded from activation counting when exclusion is on.
    pub specials: Vec<String>,
    pub exclude_specials: bool,
    /// Overrides the entry count as |V|.
    pub vocab_size: Option<u64>,
    pub pre_split: PreSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdSequence {
    pub instance_id: String,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct VocabModel {
    pub model_name: String,
    token_to_id: HashMap<String, u32>,
    id_to_token: HashMap<u32, String>,
    vocab_size: u64,
    merges: Vec<(String, String)>,
    merge_table: HashMap<(u32, u32), (usize, u32)>,
    byte_level: bool,
    unk_id: Option<u32>,
    specials: BTreeSet<u32>,
    exclude_specials: bool,
    pre_split: PreSplit,
}

impl VocabModel {
    pub fn from_parts(
        model_name: impl Into<String>,
        vocab: impl IntoIterator<Item = (String, u32)>,
        merges: Vec<(String, String)>,
        options: VocabOptions,
    ) -> Result<Self> {
        let mut token_to_id = HashMap::new();
        let mut id_to_token: HashMap<u32, String> = HashMap::new();
        for (token, id) in vocab {
            if let Some(prev) = id_to_token.get(&id) {
                return Err(Error::Vocab(format!(
                    "duplicate id {id} for tokens {prev:?} and {token:?}"
                )));
            }
            if token_to_id.insert(token.clone(), id).is_some() {
                return Err(Error::Vocab(format!("duplicate token {token:?}")));
            }
            id_to_token.insert(id, token);
        }
        let entries = token_to_id.len() as u64;
        let vocab_size = match options.vocab_size {
            Some(v) if v < entries => {
                return Err(Error::Vocab(format!(
                    "declared vocab_size {v} is smaller than the {entries} entries"
                )))
            }
            Some(v) => v,
            None => entries,
        };

        if options.byte_level {
            for c in byte_to_unicode() {
                if !token_to_id.contains_key(&c.to_string()) {
                    return Err(Error::Vocab(format!(
                        "byte-level vocabulary lacks the byte symbol {c:?}"
                    )));
                }
            }
        }

        let mut merge_table = HashMap::new();
        for (rank, (left, right)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                token_to_id.get(s).copied().ok_or_else(|| {
                    Error::Vocab(format!(
                        "merge #{} ({left} {right}) references unknown symbol {s:?}",
                        rank + 1
                    ))
                })
            };
            let l = lookup(left)?;
            let r = lookup(right)?;
            let merged = lookup(&format!("{left}{right}"))?;
            merge_table.entry((l, r)).or_insert((rank, merged));
        }

        let unk_id = match &options.unk_token {
            Some(t) => Some(
                *token_to_id
                    .get(t)
                    .ok_or_else(|| Error::Vocab(format!("unknown token {t:?} is not in the vocabulary")))?,
            ),
            None => None,
        };
        let mut specials = BTreeSet::new();
        for s in &options.specials {
            let id = token_to_id
                .get(s)
                .ok_or_else(|| Error::Vocab(format!("special token {s:?} is not in the vocabulary")))?;
            specials.insert(*id);
        }

        Ok(VocabModel {
            model_name: model_name.into(),
            token_to_id,
            id_to_token,
            vocab_size,
            merges,
            merge_table,
            byte_level: options.byte_level,
            unk_id,
            specials,
            exclude_specials: options.exclude_specials,
            pre_split: options.pre_split,
        })
    }

    /// Reads a JSON `token -> id` object and an optional merges file with
    /// one `left right` pair per line in priority order. A leading
    /// `#version` line and blank lines are skipped.
    pub fn load(
        model_name: impl Into<String>,
        vocab_path: impl AsRef<Path>,
        merges_path: Option<&Path>,
        options: VocabOptions,
    ) -> Result<Self> {
        let vocab_path = vocab_path.as_ref();
        let text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let raw: BTreeMap<String, i64> = serde_json::from_str(&text)?;
        let mut vocab = Vec::with_capacity(raw.len());
        for (token, id) in raw {
            let id = u32::try_from(id).map_err(|_| Error::Vocab(format!("token {token:?} has invalid id {id}")))?;
            vocab.push((token, id));
        }
        let merges = match merges_path {
            Some(p) => read_merges(p)?,
            None => Vec::new(),
        };
        Self::from_parts(model_name, vocab, merges, options)
    }

    /// |V|, the activation-rate denominator.
    pub fn vocab_size(&self) -> u64 {
        self.vocab_size
    }

    pub fn is_byte_level(&self) -> bool {
        self.byte_level
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn specials(&self) -> &BTreeSet<u32> {
        &self.specials
    }

    pub fn excludes_specials(&self) -> bool {
        self.exclude_specials
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(&id).map(String::as_str)
    }

    /// Upper bound (exclusive) for ids this model can emit.
    pub fn id_bound(&self) -> u64 {
        let max = self.id_to_token.keys().max().map_or(0, |&m| m as u64 + 1);
        max.max(self.vocab_size)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for chunk in self.chunks(text) {
            let symbols = self.initial_symbols(chunk)?;
            out.extend(self.apply_merges(symbols));
        }
        Ok(out)
    }

    pub fn encode_instance(&self, instance_id: impl Into<String>, text: &str) -> Result<IdSequence> {
        Ok(IdSequence {
            instance_id: instance_id.into(),
            ids: self.encode(text)?,
        })
    }

    /// Inverse of [`encode`](Self::encode) for byte-level models.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        if !self.byte_level {
            return Err(Error::Vocab("byte decoding requires a byte-level model".into()));
        }
        let map = unicode_to_byte();
        let mut out = Vec::new();
        for &id in ids {
            let token = self.token(id).ok_or(Error::IdOutOfRange {
                id: id as u64,
                vocab_size: self.vocab_size,
            })?;
            for c in token.chars() {
                out.push(
                    *map.get(&c)
                        .ok_or_else(|| Error::Vocab(format!("token {token:?} contains non-byte symbol {c:?}")))?,
                );
            }
        }
        Ok(out)
    }

    /// Activated ids of a set of sequences, honouring this model's special
    /// token exclusion setting.
    pub fn unique_ids(&self, sequences: &[IdSequence]) -> BTreeSet<u32> {
        let excluded = self.exclude_specials.then_some(&self.specials);
        unique_ids(sequences, excluded)
    }

    fn chunks<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self.pre_split {
            PreSplit::None => vec![text],
            PreSplit::Whitespace => {
                let mut chunks = Vec::new();
                let mut start = 0;
                let mut prev_ws = true;
                for (i, c) in text.char_indices() {
                    let ws = c.is_whitespace();
                    // A new chunk starts at the first whitespace after a word.
                    if ws && !prev_ws && i > start {
                        chunks.push(&text[start..i]);
                        start = i;
                    }
                    prev_ws = ws;
                }
                if start < text.len() {
                    chunks.push(&text[start..]);
                }
                chunks
            }
        }
    }

    fn initial_symbols(&self, chunk: &str) -> Result<Vec<u32>> {
        if self.byte_level {
            let table = byte_to_unicode();
            let mut buf = [0u8; 4];
            return Ok(chunk
                .bytes()
                .map(|b| {
                    let s: &str = table[b as usize].encode_utf8(&mut buf);
                    self.token_to_id[s]
                })
                .collect());
        }
        let mut buf = [0u8; 4];
        chunk
            .chars()
            .map(|c| {
                let s: &str = c.encode_utf8(&mut buf);
                match (self.token_to_id.get(s), self.unk_id) {
                    (Some(&id), _) => Ok(id),
                    (None, Some(unk)) => Ok(unk),
                    (None, None) => Err(Error::Untokenizable(c.to_string())),
                }
            })
            .collect()
    }

    fn apply_merges(&self, ids: Vec<u32>) -> Vec<u32> {
        const NONE: usize = usize::MAX;
        let n = ids.len();
        if n < 2 || self.merge_table.is_empty() {
            return ids;
        }
        let mut sym = ids;
        let mut next: Vec<usize> = (1..=n).map(|i| if i == n { NONE } else { i }).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect();
        let mut alive = vec![true; n];
        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&(rank, _)) = self.merge_table.get(&(sym[i], sym[i + 1])) {
                heap.push(Reverse((rank, i)));
            }
        }
        while let Some(Reverse((rank, pos))) = heap.pop() {
            let nx = next[pos];
            if !alive[pos] || nx == NONE {
                continue;
            }
            let Some(&(current_rank, merged)) = self.merge_table.get(&(sym[pos], sym[nx])) else {
                continue;
            };
            if current_rank != rank {
                continue;
            }
            sym[pos] = merged;
            alive[nx] = false;
            next[pos] = next[nx];
            if next[nx] != NONE {
                prev[next[nx]] = pos;
            }
            if prev[pos] != NONE {
                if let Some(&(r, _)) = self.merge_table.get(&(sym[prev[pos]], sym[pos])) {
                    heap.push(Reverse((r, prev[pos])));
                }
            }
            if next[pos] != NONE {
                if let Some(&(r, _)) = self.merge_table.get(&(sym[pos], sym[next[pos]])) {
                    heap.push(Reverse((r, pos)));
                }
            }
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i != NONE {
            out.push(sym[i]);
            i = next[i];
        }
        out
    }
}

fn read_merges(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut merges = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line.starts_with("#version")) {
            continue;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
            errors.push(RecordError {
                line: i + 1,
                message: format!("expected `left right`, got {line:?}"),
            });
            continue;
        }
        merges.push((parts[0].to_string(), parts[1].to_string()));
    }
    if !errors.is_empty() {
        return Err(Error::Records {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok(merges)
}

/// Set union of all ids, minus `excluded` when given.
pub fn unique_ids(sequences: &[IdSequence], excluded: Option<&BTreeSet<u32>>) -> BTreeSet<u32> {
    let mut set: BTreeSet<u32> = sequences.iter().flat_map(|s| s.ids.iter().copied()).collect();
    if let Some(ex) = excluded {
        set.retain(|id| !ex.contains(id));
    }
    set
}

/// Fails on the first id that is not below `vocab_size`.
pub fn check_ids(sequences: &[IdSequence], vocab_size: u64) -> Result<()> {
    for seq in sequences {
        if let Some(&id) = seq.ids.iter().find(|&&id| id as u64 >= vocab_size) {
            return Err(Error::IdOutOfRange {
                id: id as u64,
                vocab_size,
            });
        }
    }
    Ok(())
}

/// Reads `{"instance_id": ..., "ids": [...]}` lines.
pub fn load_pretokenized(path: impl AsRef<Path>) -> Result<Vec<IdSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<IdSequence>(line) {
            Ok(seq) => out.push(seq),
            Err(e) => errors.push(RecordError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Records {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok(out)
}

pub fn dump_pretokenized(sequences: &[IdSequence]) -> String {
    let mut out = String::new();
    for seq in sequences {
        out.push_str(&serde_json::to_string(seq).expect("id sequence serializes"));
        out.push('\n');
    }
    out
}
