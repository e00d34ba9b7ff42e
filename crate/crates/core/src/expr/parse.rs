use std::sync::Arc;

use super::{BinaryOp, Expr, ExprError, UnaryOp, Var, VarKind};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str, first_line: usize) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (first_line, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push(Token { tok: t, line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                line: tl,
                col: tc,
                msg: format!("malformed number '{text}'"),
            })?;
            if !v.is_finite() {
                return Err(ExprError::Syntax { line: tl, col: tc, msg: format!("number '{text}' overflows") });
            }
            col += i - start;
            out.push(Token { tok: Tok::Num(v, integral), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, col: tc });
            continue;
        }
        return Err(ExprError::Syntax { line: tl, col: tc, msg: format!("unexpected character '{c}'") });
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dims: (usize, usize, usize),
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v, _) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::Caret => "'^'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: String) -> ExprError {
        let t = self.peek();
        ExprError::Syntax { line: t.line, col: t.col, msg }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        if self.peek().tok == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {}, found {}", describe(&want), describe(&self.peek().tok))))
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Arc::new(Expr::Binary(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Arc::new(Expr::Binary(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, ExprError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let literal_follows = matches!(self.peek().tok, Tok::Num(..));
            let inner = self.unary()?;
            return Ok(match inner.as_ref() {
                Expr::Const(c) if literal_follows => Expr::constant(-c),
                _ => Arc::new(Expr::Unary(UnaryOp::Neg, inner)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, ExprError> {
        let base = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let negative = if self.peek().tok == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let t = self.bump();
        match t.tok {
            Tok::Num(v, true) if v <= i32::MAX as f64 => {
                let n = v as i32;
                Ok(Arc::new(Expr::Pow(base, if negative { -n } else { n })))
            }
            Tok::Num(_, true) => Err(ExprError::Syntax { line: t.line, col: t.col, msg: "exponent too large".into() }),
            Tok::Num(_, false) | Tok::Ident(_) | Tok::LParen => {
                Err(ExprError::NonIntegerExponent { line: t.line, col: t.col })
            }
            other => Err(ExprError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("expected integer exponent, found {}", describe(&other)),
            }),
        }
    }

    fn variable(&self, name: &str) -> Option<Var> {
        let mut chars = name.chars();
        let kind = match chars.next()? {
            'x' => VarKind::State,
            'u' => VarKind::Input,
            'w' => VarKind::Disturbance,
            _ => return None,
        };
        let digits = chars.as_str();
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        let limit = match kind {
            VarKind::State => self.dims.0,
            VarKind::Input => self.dims.1,
            VarKind::Disturbance => self.dims.2,
        };
        (k <= limit).then(|| Var { kind, index: k - 1 })
    }

    fn atom(&mut self) -> Result<Arc<Expr>, ExprError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v, _) => Ok(Expr::constant(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    self.expect(Tok::LParen)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Arc::new(Expr::Unary(op, arg)));
                }
                match self.variable(&name) {
                    Some(v) => Ok(Expr::var(v)),
                    None => Err(ExprError::UnknownIdentifier { name, line: t.line, col: t.col }),
                }
            }
            other => Err(ExprError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!("expected an operand, found {}", describe(&other)),
            }),
        }
    }
}

pub(crate) fn parse_at(src: &str, dims: (usize, usize, usize), line: usize) -> Result<Arc<Expr>, ExprError> {
    let toks = lex(src, line)?;
    let mut p = Parser { toks, pos: 0, dims };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        return Err(p.error_here(format!("unexpected {}", describe(&p.peek().tok))));
    }
    Ok(e)
}

/// Parse one expression over the symbols `x1..xn`, `u1..up`, `w1..wq`.
pub fn parse_expr(src: &str, dims: (usize, usize, usize)) -> Result<Arc<Expr>, ExprError> {
    parse_at(src, dims, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: (usize, usize, usize) = (2, 1, 1);

    #[test]
    fn single_variable() {
        assert_eq!(*parse_expr("x2", D).unwrap(), Expr::Var(Var::x(1)));
    }

    #[test]
    fn saturated_input_plus_disturbance() {
        let e = parse_expr("20*tanh(u1/20) + w1", D).unwrap();
        let Expr::Binary(BinaryOp::Add, l, r) = e.as_ref() else { panic!("{e:?}") };
        assert_eq!(**r, Expr::Var(Var::w(0)));
        let Expr::Binary(BinaryOp::Mul, c, t) = l.as_ref() else { panic!() };
        assert_eq!(c.as_const(), Some(20.0));
        assert!(matches!(t.as_ref(), Expr::Unary(UnaryOp::Tanh, _)));
    }

    #[test]
    fn precedence_power_over_minus() {
        let e = parse_expr("x1^2 - -x2", D).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Sub,
            Arc::new(Expr::Pow(Expr::var(Var::x(0)), 2)),
            Arc::new(Expr::Unary(UnaryOp::Neg, Expr::var(Var::x(1)))),
        );
        assert_eq!(*e, expected);
        let e = parse_expr("-x1^2", D).unwrap();
        assert!(matches!(e.as_ref(), Expr::Unary(UnaryOp::Neg, a) if matches!(a.as_ref(), Expr::Pow(_, 2))));
        assert_eq!(parse_expr("-3", D).unwrap().as_const(), Some(-3.0));
    }

    #[test]
    fn negative_exponent() {
        assert!(matches!(parse_expr("x1^-2", D).unwrap().as_ref(), Expr::Pow(_, -2)));
    }

    #[test]
    fn errors_carry_positions() {
        match parse_expr("x1 + \n  x3", D) {
            Err(ExprError::UnknownIdentifier { name, line, col }) => {
                assert_eq!((name.as_str(), line, col), ("x3", 2, 3));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr("x1^2.5", D), Err(ExprError::NonIntegerExponent { line: 1, col: 4 })));
        assert!(matches!(parse_expr("x1^x2", D), Err(ExprError::NonIntegerExponent { .. })));
        assert!(matches!(parse_expr("(x1 + 1", D), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("x1 $ 2", D), Err(ExprError::Syntax { line: 1, col: 4, .. })));
        assert!(matches!(parse_expr("foo(x1)", D), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse_expr("x0", D), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse_expr("x1 x2", D), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("", D), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse_expr("1.5e-3", D).unwrap().as_const(), Some(1.5e-3));
        assert_eq!(parse_expr(".25", D).unwrap().as_const(), Some(0.25));
        assert!(matches!(parse_expr("x1^1e2", D), Err(ExprError::NonIntegerExponent { .. })));
    }
}
