//! Recursive-descent parser for potential expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right associative)
//! primary := number | 'x' index | func '(' expr ')' | '(' expr ')'
//! ```

use super::expr::{BinOp, Expr, Expression, Func};
use super::ParseError;

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

pub fn parse_potential(source: &str, dim: usize) -> Result<Expression, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        dim,
    };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected '{}'", p.src[p.pos] as char)));
    }
    Ok(Expression::new(root, dim))
}

impl<'a> Parser<'a> {
    fn syntax(&self, message: String) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.syntax(format!("unexpected '{}'", c as char))),
        }
    }

    fn expect(&mut self, want: u8) -> Result<(), ParseError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(format!("expected '{}'", want as char)))
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("malformed number '{text}'"),
        })
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        if let Some(func) = Func::from_name(name) {
            if self.peek() != Some(b'(') {
                return Err(self.syntax(format!("expected '(' after {name}")));
            }
            self.pos += 1;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ParseError::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                })?;
                if index == 0 || index > self.dim {
                    return Err(ParseError::VariableOutOfRange {
                        offset: start,
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        Err(ParseError::UnknownIdentifier {
            offset: start,
            name: name.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize) -> Box<Expr> {
        Box::new(Expr::Var(i))
    }
    fn num(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    #[test]
    fn canonical_quadratic() {
        let e = parse_potential("x1^2/2 + x2^2/2", 2).unwrap();
        let half_sq = |i| {
            Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Binary(BinOp::Pow, var(i), num(2.0))),
                num(2.0),
            )
        };
        let want = Expr::Binary(BinOp::Add, Box::new(half_sq(0)), Box::new(half_sq(1)));
        assert_eq!(e.root(), &want);
    }

    #[test]
    fn log_cone_source() {
        let e = parse_potential("-log(x2^2 - x1^2)", 2).unwrap();
        let inner = Expr::Binary(
            BinOp::Sub,
            Box::new(Expr::Binary(BinOp::Pow, var(1), num(2.0))),
            Box::new(Expr::Binary(BinOp::Pow, var(0), num(2.0))),
        );
        let want = Expr::Neg(Box::new(Expr::Call(Func::Log, Box::new(inner))));
        assert_eq!(e.root(), &want);
    }

    #[test]
    fn variable_out_of_range() {
        let err = parse_potential("x3 + 1", 2).unwrap_err();
        assert!(matches!(
            err,
            ParseError::VariableOutOfRange {
                offset: 0,
                index: 3,
                dim: 2
            }
        ));
        assert!(matches!(
            parse_potential("x0", 2),
            Err(ParseError::VariableOutOfRange { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        // unary minus binds looser than ^
        let e = parse_potential("-x1^2", 1).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Neg(Box::new(Expr::Binary(BinOp::Pow, var(0), num(2.0))))
        );
        // ^ is right associative
        let e = parse_potential("x1^2^3", 1).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Binary(
                BinOp::Pow,
                var(0),
                Box::new(Expr::Binary(BinOp::Pow, num(2.0), num(3.0)))
            )
        );
        // - and / are left associative
        let e = parse_potential("x1 - x2 - 1", 2).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Binary(
                BinOp::Sub,
                Box::new(Expr::Binary(BinOp::Sub, var(0), var(1))),
                num(1.0)
            )
        );
        let e = parse_potential("x1/x2/2", 2).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Binary(
                BinOp::Div,
                Box::new(Expr::Binary(BinOp::Div, var(0), var(1))),
                num(2.0)
            )
        );
        // unary minus binds tighter than *
        let e = parse_potential("-x1*x2", 2).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Binary(BinOp::Mul, Box::new(Expr::Neg(var(0))), var(1))
        );
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_potential("  x1 *\tsin( x2 )+1.5e-1 ", 2).unwrap();
        let b = parse_potential("x1*sin(x2)+1.5e-1", 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_potential("x1 + * 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        match parse_potential("(x1 + 2", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_potential("   ", 1),
            Err(ParseError::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            parse_potential("tan(x1)", 1),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse_potential("x1 + y", 1),
            Err(ParseError::UnknownIdentifier { offset: 5, .. })
        ));
    }

    #[test]
    fn print_then_reparse_is_identity() {
        for src in [
            "-log(x2^2 - x1^2)",
            "x1^2/2 + x2^2/2",
            "-(x1 + x2)*3",
            "x1 - (x2 - 1)",
            "x1/(x2*2)",
            "(-x1)^2",
            "x1^-x2^2",
            "(x1^2)^3",
            "--x1",
            "exp(sqrt(x1)) * cos(x2) / -sin(x1)",
            "1e-7*x1 + 2.5E+3",
        ] {
            let e = parse_potential(src, 2).unwrap();
            let printed = e.to_string();
            let again = parse_potential(&printed, 2).unwrap();
            assert_eq!(e, again, "{src} -> {printed}");
        }
    }
}
