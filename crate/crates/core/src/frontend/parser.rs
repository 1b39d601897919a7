//! Recursive-descent parser producing [`Function`] ASTs whose expressions
//! are already [`Expr`] trees.

use super::lexer::{tokenize, Tok, Token};
use super::{Function, FrontendError, Stmt, StmtKind};
use crate::model::{Expr, Op, Value};

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Expression-only mode accepts primes and `$` names.
    internal: bool,
}

const AUG_ASSIGN: &[(&str, Op)] = &[("+=", Op::Add), ("-=", Op::Sub), ("*=", Op::Mul), ("/=", Op::Div), ("%=", Op::Mod)];

impl Parser {
    pub fn new(src: &str, internal: bool) -> Result<Parser, FrontendError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0, internal })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, FrontendError> {
        let t = self.peek();
        Err(FrontendError::Syntax { line: t.line, column: t.column, message: message.into() })
    }

    fn unsupported<T>(&self, construct: impl Into<String>) -> Result<T, FrontendError> {
        Err(FrontendError::Unsupported { line: self.peek().line, construct: construct.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek_tok(), Tok::Punct(q) if *q == p)
    }

    fn is_name(&self, n: &str) -> bool {
        matches!(self.peek_tok(), Tok::Name(q) if q == n)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_name(&mut self, n: &str) -> bool {
        if self.is_name(n) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), FrontendError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", describe(self.peek_tok())))
        }
    }

    fn expect_keyword(&mut self, n: &str) -> Result<(), FrontendError> {
        if self.eat_name(n) {
            Ok(())
        } else {
            self.error(format!("expected `{n}`, found {}", describe(self.peek_tok())))
        }
    }

    fn expect_ident(&mut self) -> Result<String, FrontendError> {
        match self.peek_tok().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                if n.starts_with('$') && !self.internal {
                    return self.error(format!("identifier `{n}` is reserved"));
                }
                self.next();
                Ok(n)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek_tok(), Tok::Newline) {
            self.next();
        }
    }

    pub fn parse_function(&mut self) -> Result<Function, FrontendError> {
        self.skip_newlines();
        let line = self.peek().line;
        if !self.is_name("def") {
            return self.error("expected a function definition (`def name(params):`)");
        }
        self.next();
        let name = self.expect_ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                params.push(self.expect_ident()?);
                if !self.eat_punct(",") {
                    break;
                }
                if self.is_punct(")") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.expect_punct(":")?;
        let body = self.parse_block()?;
        self.skip_newlines();
        if self.is_name("def") {
            return self.unsupported("more than one function definition");
        }
        if !matches!(self.peek_tok(), Tok::Eof) {
            return self.error(format!("unexpected {} after function body", describe(self.peek_tok())));
        }
        Ok(Function { name, params, body, line })
    }

    fn parse_block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        if matches!(self.peek_tok(), Tok::Newline) {
            self.skip_newlines();
            if !matches!(self.peek_tok(), Tok::Indent) {
                return self.error("expected an indented block");
            }
            self.next();
            let mut stmts = Vec::new();
            while !matches!(self.peek_tok(), Tok::Dedent | Tok::Eof) {
                stmts.extend(self.parse_statement()?);
                self.skip_newlines();
            }
            if matches!(self.peek_tok(), Tok::Dedent) {
                self.next();
            }
            Ok(stmts)
        } else {
            let stmts = self.parse_simple_line()?;
            Ok(stmts)
        }
    }

    fn parse_statement(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        let line = self.peek().line;
        if self.eat_name("if") {
            return Ok(vec![self.parse_if_rest(line)?]);
        }
        if self.eat_name("while") {
            let cond = self.parse_expr()?;
            self.expect_punct(":")?;
            let body = self.parse_block()?;
            return Ok(vec![Stmt { kind: StmtKind::While(cond, body), line }]);
        }
        if self.eat_name("for") {
            let var = self.expect_ident()?;
            self.expect_keyword("in")?;
            if !self.eat_name("range") {
                return self.unsupported("for-loop over something other than range(...)");
            }
            self.expect_punct("(")?;
            let first = self.parse_expr()?;
            let (start, end) = if self.eat_punct(",") {
                let second = self.parse_expr()?;
                if self.eat_punct(",") {
                    return self.unsupported("range with a step argument");
                }
                (first, second)
            } else {
                (Expr::int(0), first)
            };
            self.expect_punct(")")?;
            self.expect_punct(":")?;
            let body = self.parse_block()?;
            return Ok(vec![Stmt { kind: StmtKind::For(var, start, end, body), line }]);
        }
        for kw in ["else", "elif"] {
            if self.is_name(kw) {
                return self.error(format!("`{kw}` without a matching `if`"));
            }
        }
        for kw in ["break", "continue"] {
            if self.is_name(kw) {
                return self.unsupported(format!("`{kw}` statement"));
            }
        }
        if self.is_name("def") {
            return self.unsupported("nested function definition");
        }
        self.parse_simple_line()
    }

    fn parse_if_rest(&mut self, line: u32) -> Result<Stmt, FrontendError> {
        let cond = self.parse_expr()?;
        self.expect_punct(":")?;
        let then = self.parse_block()?;
        self.skip_newlines();
        let els = if self.is_name("elif") {
            let l = self.peek().line;
            self.next();
            vec![self.parse_if_rest(l)?]
        } else if self.eat_name("else") {
            self.expect_punct(":")?;
            self.parse_block()?
        } else {
            Vec::new()
        };
        Ok(Stmt { kind: StmtKind::If(cond, then, els), line })
    }

    fn parse_simple_line(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        let mut out = vec![self.parse_simple()?];
        while self.eat_punct(";") {
            if matches!(self.peek_tok(), Tok::Newline | Tok::Eof) {
                break;
            }
            out.push(self.parse_simple()?);
        }
        match self.peek_tok() {
            Tok::Newline => {
                self.next();
            }
            Tok::Eof | Tok::Dedent => {}
            other => {
                let d = describe(other);
                return self.error(format!("expected end of line, found {d}"));
            }
        }
        Ok(out)
    }

    fn parse_simple(&mut self) -> Result<Stmt, FrontendError> {
        let line = self.peek().line;
        if self.eat_name("pass") {
            return Ok(Stmt { kind: StmtKind::Pass, line });
        }
        if self.eat_name("return") {
            let e = self.parse_expr()?;
            return Ok(Stmt { kind: StmtKind::Return(e), line });
        }
        if let Tok::Name(n) = self.peek_tok().clone() {
            if !is_keyword(&n) {
                let save = self.pos;
                let target = self.expect_ident()?;
                if self.eat_punct("=") {
                    let e = self.parse_expr()?;
                    return Ok(Stmt { kind: StmtKind::Assign(target, e), line });
                }
                for (tok, op) in AUG_ASSIGN {
                    if self.eat_punct(tok) {
                        let e = self.parse_expr()?;
                        let rhs = Expr::op(*op, vec![Expr::Var(target.clone()), e]);
                        return Ok(Stmt { kind: StmtKind::Assign(target, rhs), line });
                    }
                }
                if self.is_punct("[") {
                    return self.unsupported("assignment to an indexed element");
                }
                if self.is_punct(",") {
                    return self.unsupported("tuple assignment");
                }
                self.pos = save;
            }
        }
        // A bare expression statement has no effect in this language.
        let _ = self.parse_expr()?;
        self.unsupported("expression statement (only assignments have effect)")
    }

    pub fn parse_expr(&mut self) -> Result<Expr, FrontendError> {
        let guard = self.parse_or()?;
        if self.eat_punct("?") {
            let then = self.parse_expr()?;
            self.expect_punct(":")?;
            let els = self.parse_expr()?;
            return Ok(Expr::op(Op::Ite, vec![guard, then, els]));
        }
        if self.is_name("if") {
            return self.unsupported("conditional expression `a if c else b`");
        }
        Ok(guard)
    }

    fn parse_or(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.parse_and()?;
        while self.eat_name("or") || self.eat_punct("||") {
            let rhs = self.parse_and()?;
            lhs = Expr::op(Op::Or, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.parse_not()?;
        while self.eat_name("and") || self.eat_punct("&&") {
            let rhs = self.parse_not()?;
            lhs = Expr::op(Op::And, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr, FrontendError> {
        if self.eat_name("not") || self.eat_punct("!") {
            let e = self.parse_not()?;
            return Ok(Expr::op(Op::Not, vec![e]));
        }
        self.parse_comparison()
    }

    fn comparison_op(&self) -> Option<Op> {
        match self.peek_tok() {
            Tok::Punct("==") => Some(Op::Eq),
            Tok::Punct("!=") => Some(Op::Ne),
            Tok::Punct("<") => Some(Op::Lt),
            Tok::Punct("<=") => Some(Op::Le),
            Tok::Punct(">") => Some(Op::Gt),
            Tok::Punct(">=") => Some(Op::Ge),
            _ => None,
        }
    }

    fn parse_comparison(&mut self) -> Result<Expr, FrontendError> {
        let lhs = self.parse_arith()?;
        if let Some(op) = self.comparison_op() {
            self.next();
            let rhs = self.parse_arith()?;
            if self.comparison_op().is_some() {
                return self.unsupported("chained comparison");
            }
            if self.is_name("in") {
                return self.unsupported("`in` operator");
            }
            return Ok(Expr::op(op, vec![lhs, rhs]));
        }
        if self.is_name("in") || self.is_name("is") {
            return self.unsupported("membership/identity operators");
        }
        Ok(lhs)
    }

    fn parse_arith(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = if self.eat_punct("+") {
                Op::Add
            } else if self.eat_punct("-") {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.parse_term()?;
            lhs = Expr::op(op, vec![lhs, rhs]);
        }
    }

    fn parse_term(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = if self.eat_punct("*") {
                Op::Mul
            } else if self.eat_punct("/") {
                if self.is_punct("/") {
                    return self.unsupported("floor division `//`");
                }
                Op::Div
            } else if self.eat_punct("%") {
                Op::Mod
            } else {
                return Ok(lhs);
            };
            let rhs = self.parse_factor()?;
            lhs = Expr::op(op, vec![lhs, rhs]);
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, FrontendError> {
        if self.eat_punct("-") {
            // A minus directly followed by a number literal is a negative constant.
            match self.peek_tok().clone() {
                Tok::Int(i) if !self.number_continues() => {
                    self.next();
                    return Ok(Expr::int(-i));
                }
                Tok::Float(x) if !self.number_continues() => {
                    self.next();
                    return Ok(Expr::float(-x));
                }
                _ => {}
            }
            let e = self.parse_factor()?;
            return Ok(Expr::op(Op::Neg, vec![e]));
        }
        if self.eat_punct("+") {
            return self.parse_factor();
        }
        self.parse_power()
    }

    /// True when the literal at the cursor is the base of `**` or a postfix
    /// operation, in which case `-` applies to the whole power.
    fn number_continues(&self) -> bool {
        matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Punct("**")) | Some(Tok::Punct("[")))
    }

    fn parse_power(&mut self) -> Result<Expr, FrontendError> {
        let base = self.parse_postfix()?;
        if self.eat_punct("**") {
            let exp = self.parse_factor()?;
            return Ok(Expr::op(Op::Pow, vec![base, exp]));
        }
        Ok(base)
    }

    fn parse_postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.parse_atom()?;
        loop {
            if self.eat_punct("[") {
                let lo = if self.is_punct(":") { Expr::Const(Value::Undef) } else { self.parse_expr()? };
                if self.eat_punct(":") {
                    let hi = if self.is_punct("]") { Expr::Const(Value::Undef) } else { self.parse_expr()? };
                    if self.is_punct(":") {
                        return self.unsupported("slice with a step");
                    }
                    self.expect_punct("]")?;
                    e = Expr::op(Op::Slice, vec![e, lo, hi]);
                } else {
                    self.expect_punct("]")?;
                    e = Expr::op(Op::Index, vec![e, lo]);
                }
            } else if self.is_punct(".") {
                self.next();
                let name = match self.peek_tok() {
                    Tok::Name(n) => n.clone(),
                    _ => return self.error("expected attribute name after `.`"),
                };
                return self.unsupported(format!("method call `.{name}`"));
            } else if matches!(self.peek_tok(), Tok::Prime) {
                if !self.internal {
                    return self.unsupported("primed variable in source program");
                }
                self.next();
                e = match e {
                    Expr::Var(v) => Expr::Primed(v),
                    _ => return self.error("prime applies only to a variable"),
                };
            } else if self.is_punct("(") {
                return self.unsupported("call of a non-function value");
            } else {
                return Ok(e);
            }
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, FrontendError> {
        let tok = self.peek().clone();
        match tok.tok {
            Tok::Int(i) => {
                self.next();
                Ok(Expr::int(i))
            }
            Tok::Float(x) => {
                self.next();
                Ok(Expr::float(x))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Const(Value::Str(s)))
            }
            Tok::Punct("(") => {
                self.next();
                let e = self.parse_expr()?;
                if self.is_punct(",") {
                    return self.unsupported("tuple");
                }
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.next();
                let mut items = Vec::new();
                while !self.is_punct("]") {
                    items.push(self.parse_expr()?);
                    if self.is_name("for") {
                        return self.unsupported("list comprehension");
                    }
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("]")?;
                Ok(make_list(items))
            }
            Tok::Name(n) => match n.as_str() {
                "True" => {
                    self.next();
                    Ok(Expr::Const(Value::Bool(true)))
                }
                "False" => {
                    self.next();
                    Ok(Expr::Const(Value::Bool(false)))
                }
                "None" => {
                    self.next();
                    Ok(Expr::Const(Value::Undef))
                }
                "lambda" => self.unsupported("lambda expression"),
                _ if is_keyword(&n) => self.error(format!("unexpected keyword `{n}`")),
                _ => {
                    self.next();
                    if self.is_punct("(") {
                        let Some(op) = Op::builtin(&n) else {
                            return self.unsupported(format!("call to undeclared function `{n}`"));
                        };
                        self.next();
                        let mut args = Vec::new();
                        while !self.is_punct(")") {
                            args.push(self.parse_expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.expect_punct(")")?;
                        if !op.arity().accepts(args.len()) {
                            return Err(FrontendError::Syntax {
                                line: tok.line,
                                column: tok.column,
                                message: format!("`{n}` does not take {} argument(s)", args.len()),
                            });
                        }
                        return Ok(Expr::op(op, args));
                    }
                    if n.starts_with('$') && !self.internal {
                        return Err(FrontendError::Syntax {
                            line: tok.line,
                            column: tok.column,
                            message: format!("identifier `{n}` is reserved"),
                        });
                    }
                    Ok(Expr::Var(n))
                }
            },
            other => self.error(format!("expected an expression, found {}", describe(&other))),
        }
    }

    pub fn expect_end(&mut self) -> Result<(), FrontendError> {
        self.skip_newlines();
        if matches!(self.peek_tok(), Tok::Eof) {
            Ok(())
        } else {
            self.error(format!("unexpected {}", describe(self.peek_tok())))
        }
    }
}

/// List literal; folds to a constant when every element is constant.
fn make_list(items: Vec<Expr>) -> Expr {
    if items.iter().all(|e| matches!(e, Expr::Const(_))) {
        Expr::Const(Value::List(
            items
                .into_iter()
                .map(|e| match e {
                    Expr::Const(v) => v,
                    _ => unreachable!(),
                })
                .collect(),
        ))
    } else {
        Expr::op(Op::MakeList, items)
    }
}

fn is_keyword(n: &str) -> bool {
    matches!(
        n,
        "def" | "if" | "elif" | "else" | "while" | "for" | "in" | "return" | "and" | "or" | "not" | "True"
            | "False" | "None" | "pass" | "break" | "continue" | "lambda" | "is"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Name(n) => format!("`{n}`"),
        Tok::Int(i) => format!("`{i}`"),
        Tok::Float(x) => format!("`{x}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Prime => "`\u{2032}`".into(),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indentation".into(),
        Tok::Dedent => "end of block".into(),
        Tok::Eof => "end of file".into(),
    }
}
