/// Splits text into model tokens.
pub trait Tokenize: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Whitespace and punctuation tokenizer. Each punctuation character is its
/// own token; bracketed upper-case specials such as `[MASK]` stay whole.
/// Case is preserved.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

fn special_len(rest: &str) -> Option<usize> {
    let body = rest.strip_prefix('[')?;
    let end = body.find(']')?;
    let name = &body[..end];
    (!name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase() || c == '_')).then_some(end + 2)
}

impl Tokenize for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        let mut iter = text.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if c.is_whitespace() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
            } else if c == '[' && special_len(&text[i..]).is_some() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                let len = special_len(&text[i..]).unwrap_or(1);
                out.push(text[i..i + len].to_string());
                while iter.peek().is_some_and(|&(j, _)| j < i + len) {
                    iter.next();
                }
            } else if c.is_alphanumeric() {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        out
    }
}
