//! Tokenization of case text and of literal chunks inside rule patterns.
//!
//! Three modes: `char` splits into single codepoints (for Chinese text),
//! `whitespace` splits on blanks, `word` segments with a user-supplied
//! lexicon (greedy longest match, single-char fallback). Angle-bracket
//! entity tags such as `<e1>` or `</e2>` are kept whole in every mode.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerMode {
    Char,
    Word,
    Whitespace,
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerMode::Char => write!(f, "char"),
            TokenizerMode::Word => write!(f, "word"),
            TokenizerMode::Whitespace => write!(f, "whitespace"),
        }
    }
}

impl FromStr for TokenizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(TokenizerMode::Char),
            "word" => Ok(TokenizerMode::Word),
            "whitespace" => Ok(TokenizerMode::Whitespace),
            other => Err(format!("unknown tokenizer mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    mode: TokenizerMode,
    lexicon: BTreeSet<String>,
    max_word_chars: usize,
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode) -> Self {
        Tokenizer {
            mode,
            lexicon: BTreeSet::new(),
            max_word_chars: 1,
        }
    }

    /// Word-mode tokenizer backed by a segmentation lexicon.
    pub fn with_lexicon<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let lexicon: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        let max_word_chars = lexicon
            .iter()
            .map(|w| w.chars().count())
            .max()
            .unwrap_or(1);
        Tokenizer {
            mode: TokenizerMode::Word,
            lexicon,
            max_word_chars,
        }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for piece in split_tags(text) {
            match piece {
                Piece::Tag(tag) => tokens.push(tag.to_string()),
                Piece::Text(chunk) => self.tokenize_plain(chunk, &mut tokens),
            }
        }
        tokens
    }

    fn tokenize_plain(&self, chunk: &str, out: &mut Vec<String>) {
        match self.mode {
            TokenizerMode::Whitespace => {
                out.extend(chunk.split_whitespace().map(str::to_string));
            }
            TokenizerMode::Char => {
                out.extend(
                    chunk
                        .chars()
                        .filter(|c| !c.is_whitespace())
                        .map(|c| c.to_string()),
                );
            }
            TokenizerMode::Word => {
                for word in chunk.split_whitespace() {
                    self.segment(word, out);
                }
            }
        }
    }

    // Greedy longest match against the lexicon; unknown spans fall back to
    // one char per token.
    fn segment(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let mut matched = 0;
            let limit = self.max_word_chars.min(chars.len() - i);
            for len in (1..=limit).rev() {
                let candidate: String = chars[i..i + len].iter().collect();
                if self.lexicon.contains(&candidate) {
                    matched = len;
                    out.push(candidate);
                    break;
                }
            }
            if matched == 0 {
                out.push(chars[i].to_string());
                matched = 1;
            }
            i += matched;
        }
    }
}

enum Piece<'a> {
    Text(&'a str),
    Tag(&'a str),
}

/// Split out `<...>` entity tags so they survive every tokenizer mode as
/// single tokens. A `<` with no closing `>` before whitespace or another
/// `<` is treated as plain text.
fn split_tags(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let bytes = text.as_bytes();
    let mut plain_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(end) = tag_end(text, i) {
                if plain_start < i {
                    pieces.push(Piece::Text(&text[plain_start..i]));
                }
                pieces.push(Piece::Tag(&text[i..end]));
                plain_start = end;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    if plain_start < bytes.len() {
        pieces.push(Piece::Text(&text[plain_start..]));
    }
    pieces
}

fn tag_end(text: &str, start: usize) -> Option<usize> {
    for (offset, c) in text[start + 1..].char_indices() {
        let pos = start + 1 + offset;
        match c {
            '>' => return Some(pos + 1),
            '<' => return None,
            c if c.is_whitespace() => return None,
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_mode_splits_codepoints() {
        let tok = Tokenizer::new(TokenizerMode::Char);
        assert_eq!(tok.tokenize("打墙洞"), vec!["打", "墙", "洞"]);
    }

    #[test]
    fn char_mode_keeps_tags_whole() {
        let tok = Tokenizer::new(TokenizerMode::Char);
        assert_eq!(
            tok.tokenize("<e1>岛</e1>"),
            vec!["<e1>", "岛", "</e1>"]
        );
    }

    #[test]
    fn whitespace_mode_splits_on_blanks() {
        let tok = Tokenizer::new(TokenizerMode::Whitespace);
        assert_eq!(
            tok.tokenize("The <e1> island </e1> was"),
            vec!["The", "<e1>", "island", "</e1>", "was"]
        );
    }

    #[test]
    fn whitespace_mode_splits_glued_tags() {
        let tok = Tokenizer::new(TokenizerMode::Whitespace);
        assert_eq!(tok.tokenize("island</e1>"), vec!["island", "</e1>"]);
    }

    #[test]
    fn unterminated_angle_is_plain_text() {
        let tok = Tokenizer::new(TokenizerMode::Whitespace);
        assert_eq!(tok.tokenize("a < b"), vec!["a", "<", "b"]);
    }

    #[test]
    fn word_mode_greedy_longest_match() {
        let tok = Tokenizer::with_lexicon(["不锈钢", "管", "不锈"]);
        assert_eq!(tok.tokenize("不锈钢管"), vec!["不锈钢", "管"]);
    }

    #[test]
    fn word_mode_falls_back_to_chars() {
        let tok = Tokenizer::with_lexicon(["入室"]);
        assert_eq!(tok.tokenize("入室作案"), vec!["入室", "作", "案"]);
    }
}
