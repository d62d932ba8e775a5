use super::{ParseDiagnostic, Severity};
use crate::ir::SourceSpan;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i128),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub column: u32,
    pub len: u32,
}

#[derive(Clone, Debug)]
pub struct Comment {
    pub line: u32,
    pub text: String,
}

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Comment>,
}

const SYMBOLS: [&str; 16] = ["->", "{", "}", "(", ")", "[", "]", ",", ";", ":", "=", "&", "*", ".", "@", "#"];

pub fn lex(file: &str, text: &str, errors: &mut Vec<ParseDiagnostic>) -> Lexed {
    let mut tokens = Vec::new();
    let mut comments = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx as u32 + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i as u32 + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '/' && chars.get(i + 1) == Some(&'/') {
                let body: String = chars[i + 2..].iter().collect();
                comments.push(Comment { line: line_no, text: body.trim().to_string() });
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                tokens.push(Token { tok: Tok::Ident(word), line: line_no, column, len: (i - start) as u32 });
                continue;
            }
            if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match word.parse::<i128>() {
                    Ok(v) => tokens.push(Token { tok: Tok::Int(v), line: line_no, column, len: (i - start) as u32 }),
                    Err(_) => errors.push(ParseDiagnostic::error(
                        SourceSpan { file: file.into(), line: line_no, column, length: (i - start) as u32 },
                        format!("integer literal `{word}` out of range"),
                    )),
                }
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                tokens.push(Token { tok: Tok::Sym(sym), line: line_no, column, len: sym.len() as u32 });
                i += sym.len();
                continue;
            }
            errors.push(ParseDiagnostic {
                span: SourceSpan { file: file.into(), line: line_no, column, length: 1 },
                message: format!("unexpected character `{c}`"),
                severity: Severity::Error,
            });
            i += 1;
        }
    }
    let last_line = text.lines().count() as u32 + 1;
    tokens.push(Token { tok: Tok::Eof, line: last_line, column: 1, len: 0 });
    Lexed { tokens, comments }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_terminator_line() {
        let mut errs = Vec::new();
        let lexed = lex("t", "drop(_1) -> [ok: bb2, unwind: bb7]; // note", &mut errs);
        assert!(errs.is_empty());
        let toks: Vec<&Tok> = lexed.tokens.iter().map(|t| &t.tok).collect();
        assert_eq!(toks[0], &Tok::Ident("drop".into()));
        assert_eq!(toks[4], &Tok::Sym("->"));
        assert_eq!(lexed.comments[0].text, "note");
        assert_eq!(lexed.tokens[2].column, 6);
    }

    #[test]
    fn negative_ints_and_bad_chars() {
        let mut errs = Vec::new();
        let lexed = lex("t", "const -12 $", &mut errs);
        assert_eq!(lexed.tokens[1].tok, Tok::Int(-12));
        assert_eq!(errs.len(), 1);
    }
}
