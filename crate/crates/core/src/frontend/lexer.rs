//! Indentation-aware tokenizer for the mini-language.

use super::FrontendError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    Prime,
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub column: u32,
}

// Longest first so that `**` wins over `*`.
const PUNCT: &[&str] = &[
    "**", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&&", "||", "(", ")", "[", "]", ",",
    ":", ";", "=", "+", "-", "*", "/", "%", "<", ">", "?", ".", "!",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut out = Vec::new();
    let mut indents: Vec<u32> = vec![0];
    // Open brackets with their positions; newlines inside them are joined.
    let mut open: Vec<(char, u32, u32)> = Vec::new();
    let mut at_line_start = true;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    let err = |line: u32, column: u32, message: String| FrontendError::Syntax { line, column, message };

    while i < chars.len() {
        if at_line_start && open.is_empty() {
            // Measure indentation of a logical line; skip blank/comment lines.
            let mut width = 0u32;
            let mut j = i;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                width += if chars[j] == '\t' { 4 } else { 1 };
                j += 1;
            }
            if j >= chars.len() {
                break;
            }
            if chars[j] == '\n' || chars[j] == '#' || chars[j] == '\r' {
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                i = j + 1;
                line += 1;
                col = 1;
                continue;
            }
            col += j as u32 - i as u32;
            i = j;
            at_line_start = false;
            let current = *indents.last().unwrap();
            if width > current {
                indents.push(width);
                out.push(Token { tok: Tok::Indent, line, column: col });
            } else {
                while width < *indents.last().unwrap() {
                    indents.pop();
                    out.push(Token { tok: Tok::Dedent, line, column: col });
                }
                if width != *indents.last().unwrap() {
                    return Err(err(line, col, "inconsistent indentation".into()));
                }
            }
            continue;
        }

        let c = chars[i];
        let start_col = col;
        match c {
            '\n' => {
                if open.is_empty() {
                    out.push(Token { tok: Tok::Newline, line, column: col });
                    at_line_start = true;
                }
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '\u{2032}' => {
                out.push(Token { tok: Tok::Prime, line, column: col });
                i += 1;
                col += 1;
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    if i >= chars.len() || chars[i] == '\n' {
                        return Err(err(line, start_col, "unterminated string literal".into()));
                    }
                    let ch = chars[i];
                    i += 1;
                    col += 1;
                    if ch == quote {
                        break;
                    }
                    if ch == '\\' {
                        let Some(&esc) = chars.get(i) else {
                            return Err(err(line, start_col, "unterminated string literal".into()));
                        };
                        i += 1;
                        col += 1;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            'r' => '\r',
                            '0' => '\0',
                            '\\' => '\\',
                            '"' => '"',
                            '\'' => '\'',
                            other => {
                                return Err(err(line, col - 1, format!("unknown escape \\{other}")));
                            }
                        });
                    } else {
                        s.push(ch);
                    }
                }
                out.push(Token { tok: Tok::Str(s), line, column: start_col });
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let mut j = i;
                let mut is_float = false;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' && !chars.get(j + 1).is_some_and(|d| *d == '.') {
                    is_float = true;
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        is_float = true;
                        j = k;
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let tok = if is_float {
                    Tok::Float(text.parse().map_err(|_| err(line, start_col, format!("bad number {text}")))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| err(line, start_col, format!("integer {text} out of range")))?)
                };
                out.push(Token { tok, line, column: start_col });
                col += (j - i) as u32;
                i = j;
            }
            c if c.is_alphabetic() || c == '_' || c == '$' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                if text == "$" {
                    return Err(err(line, start_col, "expected identifier after `$`".into()));
                }
                out.push(Token { tok: Tok::Name(text), line, column: start_col });
                col += (j - i) as u32;
                i = j;
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
                    return Err(err(line, col, format!("unexpected character `{c}`")));
                };
                match *p {
                    "(" | "[" => open.push((c, line, start_col)),
                    ")" | "]" => {
                        open.pop();
                    }
                    _ => {}
                }
                out.push(Token { tok: Tok::Punct(p), line, column: start_col });
                i += p.chars().count();
                col += p.chars().count() as u32;
            }
        }
    }
    if let Some((c, l, k)) = open.pop() {
        return Err(err(l, k, format!("`{c}` was never closed")));
    }
    if !at_line_start {
        out.push(Token { tok: Tok::Newline, line, column: col });
    }
    while indents.len() > 1 {
        indents.pop();
        out.push(Token { tok: Tok::Dedent, line, column: 1 });
    }
    out.push(Token { tok: Tok::Eof, line, column: 1 });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_produces_indent_and_dedent() {
        let toks = kinds("def f(x):\n    return x\n");
        assert!(toks.contains(&Tok::Indent));
        assert!(toks.contains(&Tok::Dedent));
        assert_eq!(toks.last(), Some(&Tok::Eof));
    }

    #[test]
    fn newlines_inside_brackets_are_joined() {
        let toks = kinds("x = [1,\n  2]\n");
        assert_eq!(toks.iter().filter(|t| **t == Tok::Newline).count(), 1);
    }

    #[test]
    fn numbers_and_primes() {
        assert_eq!(
            kinds("1 2.5 1e3 x\u{2032}"),
            vec![
                Tok::Int(1),
                Tok::Float(2.5),
                Tok::Float(1000.0),
                Tok::Name("x".into()),
                Tok::Prime,
                Tok::Newline,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn bad_character_reports_position() {
        let e = tokenize("x = 1\ny = @\n").unwrap_err();
        match e {
            FrontendError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
    }
}
