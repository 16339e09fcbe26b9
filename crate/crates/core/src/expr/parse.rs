//! Recursive-descent parser for the canonical expression grammar:
//!
//! ```text
//! expr       := term ('+' term)*
//! term       := factor ('*' factor)*
//! factor     := feature | unary_call | '(' expr ')'
//! unary_call := IDENT '(' expr ')'
//! feature    := 'x' INTEGER>=1
//! ```
//!
//! Whitespace is ignored; `+` and `*` associate to the left. Error
//! positions are 0-based byte offsets into the input.

use super::{Arity, Operator, OperatorSet, SymbolicTree};
use crate::error::{Error, Result};

/// Parses `text` into a tree over `p` features using operators from `ops`.
pub fn parse_expression(text: &str, p: usize, ops: &OperatorSet) -> Result<SymbolicTree> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        p,
        ops,
    };
    let tree = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    p: usize,
    ops: &'a OperatorSet,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            position: self.pos,
            message: message.to_string(),
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

    fn expect(&mut self, byte: u8) -> Result<()> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", byte as char)))
        }
    }

    fn binary_op(&self, op: Operator) -> Result<Operator> {
        if self.ops.contains(op) {
            Ok(op)
        } else {
            Err(Error::UnknownOperator(op.name().into()))
        }
    }

    fn expr(&mut self) -> Result<SymbolicTree> {
        let mut lhs = self.term()?;
        while self.peek() == Some(b'+') {
            self.pos += 1;
            let op = self.binary_op(Operator::Add)?;
            let rhs = self.term()?;
            lhs = SymbolicTree::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<SymbolicTree> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let op = self.binary_op(Operator::Mul)?;
            let rhs = self.factor()?;
            lhs = SymbolicTree::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<SymbolicTree> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("expected a feature, function call or `(`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn identifier(&mut self) -> Result<SymbolicTree> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let ident = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");

        if let Some(digits) = ident.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("feature index `{digits}` is too large"),
                })?;
                if index == 0 {
                    return Err(Error::Syntax {
                        position: start,
                        message: "feature indices start at x1".into(),
                    });
                }
                if index > self.p {
                    return Err(Error::Structure(format!(
                        "feature x{index} out of range for p = {}",
                        self.p
                    )));
                }
                return Ok(SymbolicTree::Terminal(index - 1));
            }
        }

        let op = Operator::from_name(ident).ok_or_else(|| Error::UnknownOperator(ident.into()))?;
        if op.arity() != Arity::Unary {
            return Err(Error::Syntax {
                position: start,
                message: format!("`{ident}` is binary; write it infix"),
            });
        }
        if !self.ops.contains(op) {
            return Err(Error::UnknownOperator(ident.into()));
        }
        self.expect(b'(')?;
        let child = self.expr()?;
        self.expect(b')')?;
        Ok(SymbolicTree::unary(op, child))
    }
}
