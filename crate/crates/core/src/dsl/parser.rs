//! Lexer and recursive-descent parser for strategy source text.

use super::ast::{Ast, BinOp, Expr, Stmt};
use super::StrategyError;

/// Source text above this size is rejected before lexing.
pub const MAX_SOURCE_BYTES: usize = 64 * 1024;
/// Nesting limit for parenthesized and unary expressions.
pub const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Let,
    Op(BinOp),
    Minus,
    Assign,
    LParen,
    RParen,
    Comma,
    Sep,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Let => "`let`".into(),
        Tok::Op(op) => format!("`{}`", op.symbol()),
        Tok::Minus => "`-`".into(),
        Tok::Assign => "`=`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Sep => "end of statement".into(),
        Tok::Eof => "end of input".into(),
    }
}

fn parse_error(line: usize, col: usize, message: impl Into<String>) -> StrategyError {
    StrategyError::Parse {
        line,
        col,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>, StrategyError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |tok: Tok, out: &mut Vec<Token>| {
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            })
        };
        if c == '\n' {
            // Newlines end statements except inside parentheses or after a
            // token that cannot end an expression.
            let continues = depth > 0
                || matches!(
                    out.last().map(|t| &t.tok),
                    Some(Tok::Op(_) | Tok::Minus | Tok::Assign | Tok::Comma | Tok::LParen)
                );
            if !continues {
                push(Tok::Sep, &mut out);
            }
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| parse_error(tl, tc, format!("malformed number `{text}`")))?;
            if !v.is_finite() {
                return Err(parse_error(
                    tl,
                    tc,
                    format!("number `{text}` is out of range"),
                ));
            }
            col += i - start;
            push(Tok::Num(v), &mut out);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if text == "let" {
                Tok::Let
            } else {
                Tok::Ident(text)
            };
            push(tok, &mut out);
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('<', Some('=')) => (Tok::Op(BinOp::Le), 2),
            ('>', Some('=')) => (Tok::Op(BinOp::Ge), 2),
            ('=', Some('=')) => (Tok::Op(BinOp::Eq), 2),
            ('!', Some('=')) => (Tok::Op(BinOp::Ne), 2),
            ('<', _) => (Tok::Op(BinOp::Lt), 1),
            ('>', _) => (Tok::Op(BinOp::Gt), 1),
            ('=', _) => (Tok::Assign, 1),
            ('+', _) => (Tok::Op(BinOp::Add), 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Op(BinOp::Mul), 1),
            ('/', _) => (Tok::Op(BinOp::Div), 1),
            ('^', _) => (Tok::Op(BinOp::Pow), 1),
            ('(', _) => {
                depth += 1;
                (Tok::LParen, 1)
            }
            (')', _) => {
                depth = depth.saturating_sub(1);
                (Tok::RParen, 1)
            }
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Sep, 1),
            _ => return Err(parse_error(tl, tc, format!("unexpected character `{c}`"))),
        };
        push(tok, &mut out);
        i += len;
        col += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

/// Parses source text into a surface tree. Names are not resolved here.
pub fn parse(src: &str) -> Result<Ast, StrategyError> {
    if src.len() > MAX_SOURCE_BYTES {
        return Err(StrategyError::Budget(format!(
            "source is {} bytes, limit is {MAX_SOURCE_BYTES}",
            src.len()
        )));
    }
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        depth: 0,
    };
    let mut stmts = Vec::new();
    loop {
        while p.peek() == &Tok::Sep {
            p.pos += 1;
        }
        if p.peek() == &Tok::Eof {
            break;
        }
        stmts.push(p.statement()?);
        match p.peek() {
            Tok::Sep => p.pos += 1,
            Tok::Eof => {}
            t => {
                let t = describe(t);
                return Err(p.error(format!("expected `;` or newline, found {t}")));
            }
        }
    }
    Ok(Ast { stmts })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn error(&self, message: String) -> StrategyError {
        let t = &self.toks[self.pos];
        parse_error(t.line, t.col, message)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), StrategyError> {
        if self.peek() == &want {
            self.pos += 1;
            Ok(())
        } else {
            let (w, f) = (describe(&want), describe(self.peek()));
            Err(self.error(format!("expected {w}, found {f}")))
        }
    }

    fn statement(&mut self) -> Result<Stmt, StrategyError> {
        if self.peek() == &Tok::Let {
            self.pos += 1;
        }
        let line = self.toks[self.pos].line;
        let name = match self.next() {
            Tok::Ident(s) => s,
            t => {
                self.pos -= 1;
                return Err(self.error(format!("expected a name, found {}", describe(&t))));
            }
        };
        self.expect(Tok::Assign)?;
        let expr = self.expr()?;
        Ok(Stmt { name, expr, line })
    }

    fn nest(&mut self) -> Result<(), StrategyError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(StrategyError::Budget(format!(
                "expression nesting exceeds {MAX_NESTING}"
            )));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, StrategyError> {
        self.nest()?;
        let lhs = self.additive()?;
        let e = match self.peek() {
            Tok::Op(
                op @ (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne),
            ) => {
                let op = *op;
                self.pos += 1;
                let rhs = self.additive()?;
                if let Tok::Op(
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne,
                ) = self.peek()
                {
                    return Err(self.error("comparisons cannot be chained".into()));
                }
                Expr::bin(op, lhs, rhs)
            }
            _ => lhs,
        };
        self.depth -= 1;
        Ok(e)
    }

    fn additive(&mut self) -> Result<Expr, StrategyError> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op(BinOp::Add) => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.pos += 1;
            let rhs = self.term()?;
            e = Expr::bin(op, e, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, StrategyError> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op(op @ (BinOp::Mul | BinOp::Div)) => *op,
                _ => return Ok(e),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            e = Expr::bin(op, e, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, StrategyError> {
        if self.peek() != &Tok::Minus {
            return self.power();
        }
        self.pos += 1;
        // `-<number>` is a negative literal unless the number is a power base.
        if let (Tok::Num(v), false) = (self.peek().clone(), self.peek_at(1) == &Tok::Op(BinOp::Pow))
        {
            self.pos += 1;
            return Ok(Expr::Num(-v));
        }
        self.nest()?;
        let inner = self.unary()?;
        self.depth -= 1;
        Ok(Expr::Neg(Box::new(inner)))
    }

    fn power(&mut self) -> Result<Expr, StrategyError> {
        let base = self.primary()?;
        if self.peek() == &Tok::Op(BinOp::Pow) {
            self.pos += 1;
            self.nest()?;
            let exp = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, StrategyError> {
        match self.next() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if self.peek() != &Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() != &Tok::RParen {
                    loop {
                        args.push(self.expr()?);
                        if self.peek() == &Tok::Comma {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(Expr::Call(name, args))
            }
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            t => {
                self.pos -= 1;
                Err(self.error(format!("expected an expression, found {}", describe(&t))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(src: &str) {
        let a = parse(src).unwrap();
        let printed = a.to_string();
        let b = parse(&printed).unwrap();
        assert_eq!(a, b, "{src} -> {printed}");
    }

    #[test]
    fn precedence_and_associativity() {
        let a = parse("z = 1 - 2 - 3 * 4 ^ 2 ^ 0.5").unwrap();
        assert_eq!(a.stmts[0].expr.to_string(), "1 - 2 - 3 * 4 ^ 2 ^ 0.5");
        let e = &a.stmts[0].expr;
        let Expr::Bin(BinOp::Sub, l, _) = e else {
            panic!()
        };
        assert!(matches!(**l, Expr::Bin(BinOp::Sub, ..)));
    }

    #[test]
    fn negative_literals_fold() {
        let a = parse("z = -2.5 * x").unwrap();
        assert_eq!(
            a.stmts[0].expr,
            Expr::bin(BinOp::Mul, Expr::Num(-2.5), Expr::var("x"))
        );
        let a = parse("z = -2 ^ 2").unwrap();
        assert!(matches!(a.stmts[0].expr, Expr::Neg(_)));
    }

    #[test]
    fn printer_roundtrips() {
        for src in [
            "a = (1 + 2) * 3",
            "a = -(x + 1) ^ 2",
            "a = (-2) ^ x; b = x - -1",
            "a = 2 ^ -x ^ 3",
            "a = (x < 1) == (y > 2)",
            "a = -(-x)",
            "a = -(3)",
            "a = select(area > quantile(area, 0.9), kmeans1d(x, 4), 1 / (1 + degree))",
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn separators_comments_and_continuations() {
        let a = parse("# head\nlet a = 1 +\n 2 // tail\n\nb = (a\n * 3); c = b").unwrap();
        assert_eq!(a.stmts.len(), 3);
        assert_eq!(a.stmts[1].line, 5);
    }

    #[test]
    fn errors_carry_positions() {
        match parse("a = 1\nb = (2 + )") {
            Err(StrategyError::Parse { line, col, .. }) => assert_eq!((line, col), (2, 10)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("a = 1 < 2 < 3"),
            Err(StrategyError::Parse { .. })
        ));
        assert!(matches!(
            parse("a = $"),
            Err(StrategyError::Parse {
                line: 1,
                col: 5,
                ..
            })
        ));
        let deep = format!("a = {}1{}", "(".repeat(100), ")".repeat(100));
        assert!(matches!(parse(&deep), Err(StrategyError::Budget(_))));
    }
}
