use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Arrow,
    LArrow,
    Op(&'static str),
    Punct(char),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Arrow => "`->`".into(),
            Tok::LArrow => "`<-`".into(),
            Tok::Op(o) => format!("`{o}`"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn lex(src: &str) -> Result<Vec<Spanned>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, expected: &str, found: String| DslError::Syntax {
        line,
        col,
        expected: expected.into(),
        found,
    };
    while i < chars.len() {
        let c = chars[i];
        let peek = chars.get(i + 1).copied();
        let (start_line, start_col) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let tok = if c == '"' {
            advance(1, &mut i);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(start_line, start_col, "closing `\"`", "end of line".into()))
                    }
                    Some('"') => {
                        advance(1, &mut i);
                        break;
                    }
                    Some('\\') => {
                        let e = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('r') => '\r',
                            other => {
                                return Err(err(
                                    line,
                                    col,
                                    "escape sequence",
                                    other.map_or("end of input".into(), |c| format!("`\\{c}`")),
                                ))
                            }
                        };
                        s.push(e);
                        advance(2, &mut i);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(1, &mut i);
                    }
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&ch) = chars.get(i) {
                let next = chars.get(i + 1).copied();
                let continues = ch.is_ascii_alphanumeric()
                    || ch == '_'
                    || (ch == '-' && next.is_some_and(|n| n.is_ascii_alphanumeric() || n == '_'));
                if !continues {
                    break;
                }
                s.push(ch);
                advance(1, &mut i);
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit() || p == '.')) || c == '.' {
            let mut s = String::new();
            s.push(c);
            advance(1, &mut i);
            while let Some(&ch) = chars.get(i) {
                let prev = s.chars().last().unwrap();
                if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || ((ch == '-' || ch == '+') && (prev == 'e' || prev == 'E')) {
                    s.push(ch);
                    advance(1, &mut i);
                } else {
                    break;
                }
            }
            match s.parse::<f64>() {
                Ok(n) if n.is_finite() => Tok::Num(n),
                _ => return Err(err(start_line, start_col, "number", format!("`{s}`"))),
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (tok, n) = match two.as_str() {
                "->" => (Tok::Arrow, 2),
                "<-" => (Tok::LArrow, 2),
                "<=" => (Tok::Op("<="), 2),
                ">=" => (Tok::Op(">="), 2),
                "==" => (Tok::Op("=="), 2),
                "!=" => (Tok::Op("!="), 2),
                _ => match c {
                    '<' => (Tok::Op("<"), 1),
                    '>' => (Tok::Op(">"), 1),
                    '{' | '}' | '(' | ')' | '[' | ']' | ';' | ',' | ':' => (Tok::Punct(c), 1),
                    _ => return Err(err(line, col, "token", format!("`{c}`"))),
                },
            };
            advance(n, &mut i);
            tok
        };
        out.push(Spanned { tok, line: start_line, col: start_col });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn arrows_and_hyphenated_idents() {
        assert_eq!(
            toks("a->b mc-gcmc <- x-1"),
            vec![
                Tok::Ident("a".into()),
                Tok::Arrow,
                Tok::Ident("b".into()),
                Tok::Ident("mc-gcmc".into()),
                Tok::LArrow,
                Tok::Ident("x-1".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn numbers_strings_comments() {
        assert_eq!(
            toks("-1.5e-3 // hi\n\"a\\\"b\" <= 2"),
            vec![Tok::Num(-1.5e-3), Tok::Str("a\"b".into()), Tok::Op("<="), Tok::Num(2.0), Tok::Eof]
        );
    }

    #[test]
    fn positions() {
        let t = lex("a\n  b").unwrap();
        assert_eq!((t[1].line, t[1].col), (2, 3));
        assert!(matches!(lex("a\n \"open"), Err(DslError::Syntax { line: 2, col: 2, .. })));
        assert!(matches!(lex("a $"), Err(DslError::Syntax { line: 1, col: 3, .. })));
    }
}
