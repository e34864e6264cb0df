//! Wordpiece tokenization and the `[CLS] question [SEP] answer [SEP]` pair
//! template.
//!
//! Tokenization is greedy longest-match over a fixed vocabulary with the `##`
//! continuation prefix, lowercasing enabled, and whitespace/punctuation
//! pre-splitting. The highlighter token is matched atomically before any of
//! that, so it survives tokenization intact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
/// Surface form of the highlighter's replacement token.
pub const HIGHLIGHT_TOKEN: &str = "SPECIAL_TOKEN";

const CONTINUATION_PREFIX: &str = "##";

pub type TokenId = usize;

/// Token table with ids equal to zero-based line position in the vocab file.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    cls: TokenId,
    sep: TokenId,
    pad: TokenId,
    unk: TokenId,
    highlight: TokenId,
}

impl Vocabulary {
    /// Loads a vocabulary file: UTF-8, one token per line, id = line index.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_lines(text.lines())
    }

    pub fn from_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for (i, raw) in lines.enumerate() {
            let line = i + 1;
            let token = raw.strip_suffix('\r').unwrap_or(raw);
            if token.is_empty() {
                return Err(Error::format_at(line, "empty token"));
            }
            if token.chars().any(char::is_whitespace) {
                return Err(Error::format_at(
                    line,
                    format!("token '{token}' contains whitespace"),
                ));
            }
            if index.contains_key(token) {
                return Err(Error::format_at(line, format!("duplicate token '{token}'")));
            }
            index.insert(token.to_string(), tokens.len());
            tokens.push(token.to_string());
        }

        let reserved = |name: &str| -> Result<TokenId> {
            index.get(name).copied().ok_or_else(|| {
                Error::format(format!("reserved token {name} missing from vocabulary"))
            })
        };
        let cls = reserved(CLS_TOKEN)?;
        let sep = reserved(SEP_TOKEN)?;
        let pad = reserved(PAD_TOKEN)?;
        let unk = reserved(UNK_TOKEN)?;

        let highlight = match index.get(HIGHLIGHT_TOKEN) {
            Some(&id) => id,
            None => {
                log::warn!(
                    "vocabulary has no {HIGHLIGHT_TOKEN}; appending it with id {}",
                    tokens.len()
                );
                index.insert(HIGHLIGHT_TOKEN.to_string(), tokens.len());
                tokens.push(HIGHLIGHT_TOKEN.to_string());
                tokens.len() - 1
            }
        };

        Ok(Self {
            tokens,
            index,
            cls,
            sep,
            pad,
            unk,
            highlight,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn cls_id(&self) -> TokenId {
        self.cls
    }

    pub fn sep_id(&self) -> TokenId {
        self.sep
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn highlight_id(&self) -> TokenId {
        self.highlight
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens_to_ids(&self, tokens: &[String]) -> Result<Vec<TokenId>> {
        tokens
            .iter()
            .map(|t| {
                self.id_of(t)
                    .ok_or_else(|| Error::data(format!("token '{t}' not in vocabulary")))
            })
            .collect()
    }

    pub fn ids_to_tokens(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::data(format!("token id {id} out of range")))
            })
            .collect()
    }

    /// Tokenizes free text. Every output token is in the vocabulary; a word
    /// with no wordpiece decomposition becomes a single `[UNK]`.
    pub fn wordpiece_tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            // The highlighter token is exempt from lowercasing and splitting.
            let mut rest = chunk;
            while let Some(pos) = rest.find(HIGHLIGHT_TOKEN) {
                self.tokenize_plain(&rest[..pos], &mut out);
                out.push(HIGHLIGHT_TOKEN.to_string());
                rest = &rest[pos + HIGHLIGHT_TOKEN.len()..];
            }
            self.tokenize_plain(rest, &mut out);
        }
        out
    }

    fn tokenize_plain(&self, segment: &str, out: &mut Vec<String>) {
        if segment.is_empty() {
            return;
        }
        let lowered = segment.to_lowercase();
        let mut word = String::new();
        for ch in lowered.chars() {
            if is_punctuation(ch) {
                if !word.is_empty() {
                    self.wordpiece_word(&std::mem::take(&mut word), out);
                }
                self.wordpiece_word(&ch.to_string(), out);
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            self.wordpiece_word(&word, out);
        }
    }

    /// Greedy longest-match decomposition of a single word.
    fn wordpiece_word(&self, word: &str, out: &mut Vec<String>) {
        if self.index.contains_key(word) {
            out.push(word.to_string());
            return;
        }
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut matched = None;
            while end > start {
                let mut candidate = String::new();
                if start > 0 {
                    candidate.push_str(CONTINUATION_PREFIX);
                }
                for ch in &chars[start..end] {
                    candidate.write_char(*ch).expect("string write");
                }
                if self.index.contains_key(&candidate) {
                    matched = Some(candidate);
                    break;
                }
                end -= 1;
            }
            match matched {
                Some(piece) => {
                    pieces.push(piece);
                    start = end;
                }
                None => {
                    out.push(UNK_TOKEN.to_string());
                    return;
                }
            }
        }
        out.append(&mut pieces);
    }

    /// Tokenizes a question/answer pair and lays it out as
    /// `[CLS] q... [SEP] a... [SEP]` padded to `max_len`.
    pub fn encode_pair(
        &self,
        question: &str,
        answer: &str,
        max_len: usize,
    ) -> Result<PairEncoding> {
        let q = self.wordpiece_tokenize(question);
        let a = self.wordpiece_tokenize(answer);
        self.build_pair_input(&q, &a, max_len)
    }

    /// Pair layout from already-tokenized inputs. When the template exceeds
    /// `max_len`, answer tokens are truncated first, then question tokens;
    /// the three structural tokens always survive.
    pub fn build_pair_input(
        &self,
        question_tokens: &[String],
        answer_tokens: &[String],
        max_len: usize,
    ) -> Result<PairEncoding> {
        if max_len < 8 {
            return Err(Error::config(format!(
                "max_len must be at least 8, got {max_len}"
            )));
        }
        if question_tokens.is_empty() {
            return Err(Error::data("question produced no tokens"));
        }
        let q_ids = self.tokens_to_ids(question_tokens)?;
        let a_ids = self.tokens_to_ids(answer_tokens)?;

        let budget = max_len - 3;
        let a_keep = a_ids.len().min(budget.saturating_sub(q_ids.len()));
        let q_keep = q_ids.len().min(budget - a_keep);

        let mut token_ids = Vec::with_capacity(max_len);
        let mut segment_ids = Vec::with_capacity(max_len);
        token_ids.push(self.cls);
        segment_ids.push(0);
        token_ids.extend_from_slice(&q_ids[..q_keep]);
        segment_ids.extend(std::iter::repeat_n(0, q_keep));
        token_ids.push(self.sep);
        segment_ids.push(0);
        let question_span = 1..1 + q_keep;

        let answer_start = token_ids.len();
        token_ids.extend_from_slice(&a_ids[..a_keep]);
        segment_ids.extend(std::iter::repeat_n(1, a_keep));
        token_ids.push(self.sep);
        segment_ids.push(1);
        let answer_span = answer_start..answer_start + a_keep;

        let real_len = token_ids.len();
        let mut attention_mask = vec![1u8; real_len];
        token_ids.resize(max_len, self.pad);
        segment_ids.resize(max_len, 0);
        attention_mask.resize(max_len, 0);

        Ok(PairEncoding {
            token_ids,
            segment_ids,
            attention_mask,
            question_span,
            answer_span,
        })
    }
}

/// Characters that split words: anything neither alphanumeric nor whitespace.
fn is_punctuation(ch: char) -> bool {
    !ch.is_alphanumeric()
}

/// The pair template applied to raw sentence strings.
pub fn pair_template(question: &str, answer: &str) -> String {
    format!("{CLS_TOKEN} {question} {SEP_TOKEN} {answer} {SEP_TOKEN}")
}

/// Tokenized pair with segment ids, attention mask, and the half-open token
/// index ranges of the question and answer (structural tokens excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEncoding {
    pub token_ids: Vec<TokenId>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub question_span: Range<usize>,
    pub answer_span: Range<usize>,
}

impl PairEncoding {
    pub fn max_len(&self) -> usize {
        self.token_ids.len()
    }

    /// Number of non-pad positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}
