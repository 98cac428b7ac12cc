use crate::il::{Pos, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i32),
    Float(f32),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Dot,
    Eq,
    Plus,
    Arrow,
    Bang,
    Lt,
    Gt,
    AtBrw,
    AtDyn,
    Underscore,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(x) => format!("`{x:?}f`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::AtBrw => "`@brw`".into(),
            Tok::AtDyn => "`@dyn`".into(),
            Tok::Underscore => "`_`".into(),
            Tok::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `text` into tokens. Lexing continues past errors so that every
/// malformed token is reported.
pub fn lex(text: &str) -> (Vec<Token>, Vec<LexError>) {
    let mut cur = Cursor { chars: text.chars().peekable(), pos: Pos { line: 1, col: 1 } };
    let mut tokens = Vec::new();
    let mut errors = Vec::new();

    while let Some(c) = cur.peek() {
        let start = cur.pos;
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let tok = match c {
            '/' => {
                cur.bump();
                if cur.peek() == Some('/') {
                    while let Some(c) = cur.peek() {
                        if c == '\n' {
                            break;
                        }
                        cur.bump();
                    }
                    continue;
                }
                errors.push(LexError {
                    span: Span::new(start, cur.pos),
                    message: "unexpected `/`; comments start with `//`".into(),
                });
                continue;
            }
            '(' | ')' | '{' | '}' | '[' | ']' | ',' | ':' | '.' | '=' | '+' | '!' | '<' | '>' => {
                cur.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '.' => Tok::Dot,
                    '=' => Tok::Eq,
                    '+' => Tok::Plus,
                    '!' => Tok::Bang,
                    '<' => Tok::Lt,
                    _ => Tok::Gt,
                }
            }
            '∃' => {
                cur.bump();
                Tok::Ident("exists".into())
            }
            '∀' => {
                cur.bump();
                Tok::Ident("forall".into())
            }
            '@' => {
                cur.bump();
                let mut word = String::new();
                while let Some(c) = cur.peek().filter(|c| is_ident_char(*c)) {
                    word.push(c);
                    cur.bump();
                }
                match word.as_str() {
                    "brw" => Tok::AtBrw,
                    "dyn" => Tok::AtDyn,
                    _ => {
                        errors.push(LexError {
                            span: Span::new(start, cur.pos),
                            message: format!("unknown qualifier `@{word}`"),
                        });
                        continue;
                    }
                }
            }
            '-' => {
                cur.bump();
                match cur.peek() {
                    Some('>') => {
                        cur.bump();
                        Tok::Arrow
                    }
                    Some(d) if d.is_ascii_digit() => match lex_number(&mut cur, true) {
                        Ok(t) => t,
                        Err(message) => {
                            errors.push(LexError { span: Span::new(start, cur.pos), message });
                            continue;
                        }
                    },
                    _ => {
                        errors.push(LexError {
                            span: Span::new(start, cur.pos),
                            message: "unexpected `-`".into(),
                        });
                        continue;
                    }
                }
            }
            d if d.is_ascii_digit() => match lex_number(&mut cur, false) {
                Ok(t) => t,
                Err(message) => {
                    errors.push(LexError { span: Span::new(start, cur.pos), message });
                    continue;
                }
            },
            c if is_ident_start(c) => {
                let mut word = String::new();
                while let Some(c) = cur.peek().filter(|c| is_ident_char(*c)) {
                    word.push(c);
                    cur.bump();
                }
                if word == "_" {
                    Tok::Underscore
                } else {
                    Tok::Ident(word)
                }
            }
            other => {
                cur.bump();
                errors.push(LexError {
                    span: Span::new(start, cur.pos),
                    message: format!("unexpected character `{other}`"),
                });
                continue;
            }
        };
        tokens.push(Token { tok, span: Span::new(start, cur.pos) });
    }
    tokens.push(Token { tok: Tok::Eof, span: Span::new(cur.pos, cur.pos) });
    (tokens, errors)
}

fn lex_number(cur: &mut Cursor<'_>, negative: bool) -> Result<Tok, String> {
    let mut text = String::new();
    if negative {
        text.push('-');
    }
    let digits = |cur: &mut Cursor<'_>, text: &mut String| {
        while let Some(d) = cur.peek().filter(char::is_ascii_digit) {
            text.push(d);
            cur.bump();
        }
    };
    digits(cur, &mut text);
    let mut is_float = false;
    if cur.peek() == Some('.') {
        is_float = true;
        text.push('.');
        cur.bump();
        digits(cur, &mut text);
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        is_float = true;
        text.push('e');
        cur.bump();
        if cur.peek() == Some('-') {
            text.push('-');
            cur.bump();
        }
        digits(cur, &mut text);
    }
    if cur.peek() == Some('f') {
        cur.bump();
        if cur.peek().is_some_and(is_ident_char) {
            return Err(format!("malformed number `{text}f`"));
        }
        return text
            .parse::<f32>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Tok::Float)
            .ok_or_else(|| format!("malformed float literal `{text}f`"));
    }
    if cur.peek().is_some_and(is_ident_char) {
        while cur.peek().is_some_and(is_ident_char) {
            cur.bump();
        }
        return Err(format!("malformed number starting with `{text}`"));
    }
    if is_float {
        return Err(format!("float literal `{text}` needs an `f` suffix"));
    }
    text.parse::<i32>()
        .map(Tok::Int)
        .map_err(|_| format!("integer literal `{text}` does not fit in 32 bits"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        let (t, e) = lex(s);
        assert!(e.is_empty(), "{e:?}");
        t.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn punctuation_and_arrows() {
        assert_eq!(
            toks("(!a)->Junk<I32>"),
            vec![
                Tok::LParen,
                Tok::Bang,
                Tok::Ident("a".into()),
                Tok::RParen,
                Tok::Arrow,
                Tok::Ident("Junk".into()),
                Tok::Lt,
                Tok::Ident("I32".into()),
                Tok::Gt,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(toks("13.37f"), vec![Tok::Float(13.37), Tok::Eof]);
        assert_eq!(toks("-2147483648"), vec![Tok::Int(i32::MIN), Tok::Eof]);
        assert_eq!(toks("1e-7f"), vec![Tok::Float(1e-7), Tok::Eof]);
        let (_, e) = lex("2147483648");
        assert_eq!(e.len(), 1);
        let (_, e) = lex("1.5");
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn comments_and_glyphs() {
        assert_eq!(
            toks("∃a // trailing\n_"),
            vec![Tok::Ident("exists".into()), Tok::Ident("a".into()), Tok::Underscore, Tok::Eof]
        );
    }

    #[test]
    fn qualifiers() {
        assert_eq!(toks("@brw @dyn"), vec![Tok::AtBrw, Tok::AtDyn, Tok::Eof]);
        assert_eq!(lex("@own").1.len(), 1);
    }

    #[test]
    fn spans_are_one_based() {
        let (t, _) = lex("  x\n y");
        assert_eq!(t[0].span.start, Pos { line: 1, col: 3 });
        assert_eq!(t[1].span.start, Pos { line: 2, col: 2 });
        assert_eq!(t[1].span.end, Pos { line: 2, col: 3 });
    }
}
