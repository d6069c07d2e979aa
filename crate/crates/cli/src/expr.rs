//! Real numbers in scenario files.
//!
//! Values are strings so they parse the same on every platform: decimal
//! literals go through the correctly rounded `f64` parser, and the only
//! operations allowed on top are `+ - * /`, parentheses, `sqrt` and the
//! constant `pi`, all of which are correctly rounded in IEEE arithmetic.
//!
//! ```
//! use torus_drift_cli::expr::parse_real;
//! assert_eq!(parse_real("0.05").unwrap(), 0.05);
//! assert_eq!(parse_real("1/sqrt(pi)").unwrap(), 1.0 / std::f64::consts::PI.sqrt());
//! ```

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot parse {input:?} at byte {at}: {reason}")]
pub struct ExprError {
    pub input: String,
    pub at: usize,
    pub reason: String,
}

pub fn parse_real(input: &str) -> Result<f64, ExprError> {
    let mut p = Parser {
        src: input.as_bytes(),
        input,
        pos: 0,
    };
    let v = p.sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input"));
    }
    if !v.is_finite() {
        return Err(p.error("value is not finite"));
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a [u8],
    input: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, reason: &str) -> ExprError {
        ExprError {
            input: self.input.to_string(),
            at: self.pos,
            reason: reason.to_string(),
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

    fn sum(&mut self) -> Result<f64, ExprError> {
        let mut v = self.product()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            v = if op == b'+' { v + rhs } else { v - rhs };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<f64, ExprError> {
        let mut v = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            v = if op == b'*' { v * rhs } else { v / rhs };
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<f64, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                match &self.input[start..self.pos] {
                    "pi" => Ok(PI),
                    "sqrt" => {
                        if self.peek() != Some(b'(') {
                            return Err(self.error("expected '(' after sqrt"));
                        }
                        let v = self.atom()?;
                        if v < 0.0 {
                            return Err(self.error("sqrt of a negative number"));
                        }
                        Ok(v.sqrt())
                    }
                    _ => {
                        self.pos = start;
                        Err(self.error("unknown name (allowed: pi, sqrt)"))
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                let bytes = self.src;
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut e = end + 1;
                    if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                        e += 1;
                    }
                    if e < bytes.len() && bytes[e].is_ascii_digit() {
                        while e < bytes.len() && bytes[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = &self.input[start..end];
                let v = text.parse::<f64>().map_err(|_| self.error("malformed number"))?;
                self.pos = end;
                Ok(v)
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}
