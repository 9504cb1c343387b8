use super::ast::{
    is_builtin_type, Component, ComponentKind, Connect, Equation, Instantiation, Parameter,
    Variable, WhenAction,
};
use super::clean::{mark_annotations, render_span, AnnotationMarks};
use super::lexer::{lex, LexedSource};
use super::token::{Token, TokenKind};
use super::FrontendError;

/// Parse one stored unit (the content of a `.mo` file) into its component
/// definitions. Nested definitions are flattened into the returned list in
/// document order, parents first, with dot-joined qualified names. A leading
/// `within` clause becomes the qualified-name prefix.
pub fn parse_unit(source: &str) -> Result<Vec<Component>, FrontendError> {
    let lexed = lex(source)?;
    let marks = mark_annotations(&lexed)?;
    let mut parser = Parser::new(&lexed, &marks);
    parser.parse_stored_unit()
}

/// Name of the first class defined in `source`, if any. Used to decide which
/// model a candidate defines without running the full parser.
pub fn first_class_name(source: &str) -> Option<String> {
    let lexed = lex(source).ok()?;
    let mut iter = lexed.tokens.iter().filter(|t| t.kind != TokenKind::Comment);
    while let Some(tok) = iter.next() {
        if tok.kind == TokenKind::Keyword
            && ComponentKind::from_keyword(&tok.text, false).is_some()
        {
            if let Some(next) = iter.next() {
                if next.kind == TokenKind::Identifier {
                    return Some(next.text.clone());
                }
            }
        }
    }
    None
}

const CLASS_PREFIXES: &[&str] = &[
    "encapsulated",
    "expandable",
    "final",
    "impure",
    "inner",
    "operator",
    "outer",
    "partial",
    "pure",
    "redeclare",
    "replaceable",
];

const COMPONENT_PREFIXES: &[&str] = &[
    "constant",
    "discrete",
    "each",
    "final",
    "flow",
    "input",
    "output",
    "parameter",
    "stream",
];

struct Parser<'a> {
    lexed: &'a LexedSource,
    marks: &'a AnnotationMarks,
    /// Raw indices of non-comment tokens.
    sig: Vec<usize>,
    pos: usize,
}

struct PendingComponent {
    component: Component,
    span: (usize, usize),
}

impl<'a> Parser<'a> {
    fn new(lexed: &'a LexedSource, marks: &'a AnnotationMarks) -> Self {
        let sig = lexed
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind != TokenKind::Comment)
            .map(|(i, _)| i)
            .collect();
        Parser { lexed, marks, sig, pos: 0 }
    }

    fn tok(&self) -> Option<&Token> {
        self.sig.get(self.pos).map(|&i| &self.lexed.tokens[i])
    }

    fn tok_at(&self, pos: usize) -> Option<&Token> {
        self.sig.get(pos).map(|&i| &self.lexed.tokens[i])
    }

    fn raw_idx(&self) -> usize {
        self.sig.get(self.pos).copied().unwrap_or(self.lexed.tokens.len())
    }

    fn advance(&mut self) {
        self.pos += 1;
    }

    fn at_end(&self) -> bool {
        self.pos >= self.sig.len()
    }

    fn error(&self, expected: &str) -> FrontendError {
        match self.tok() {
            Some(t) => FrontendError::Syntax {
                line: t.line,
                column: t.column,
                message: format!("expected {expected}, found '{}'", t.text),
            },
            None => {
                let (line, column) = self
                    .lexed
                    .tokens
                    .last()
                    .map(|t| (t.line, t.column))
                    .unwrap_or((1, 1));
                FrontendError::Syntax {
                    line,
                    column,
                    message: format!("unexpected end of input, expected {expected}"),
                }
            }
        }
    }

    fn expect_ident(&mut self) -> Result<String, FrontendError> {
        match self.tok() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let name = t.text.clone();
                self.advance();
                Ok(name)
            }
            _ => Err(self.error("an identifier")),
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), FrontendError> {
        match self.tok() {
            Some(t) if t.is_punct(p) => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(&format!("'{p}'"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        match self.tok() {
            Some(t) if t.is_keyword(kw) => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(&format!("'{kw}'"))),
        }
    }

    /// Cleaned text of the significant-token range `start..end` (positions in
    /// `sig`), annotations removed, whitespace squashed to single spaces.
    fn text_of(&self, start: usize, end: usize) -> String {
        if start >= end {
            return String::new();
        }
        let raw_start = self.sig[start];
        let raw_end = self.sig[end - 1];
        squash_ws(&render_span(self.lexed, self.marks, raw_start, raw_end))
    }

    fn parse_stored_unit(&mut self) -> Result<Vec<Component>, FrontendError> {
        let mut prefix = String::new();
        if self.tok().is_some_and(|t| t.is_keyword("within")) {
            self.advance();
            if self.tok().is_some_and(|t| t.kind == TokenKind::Identifier) {
                prefix = self.parse_type_path()?;
            }
            self.expect_punct(";")?;
        }

        let mut pending = Vec::new();
        while !self.at_end() {
            let tok = self.tok().unwrap();
            if tok.is_punct(";") {
                self.advance();
            } else if tok.is_keyword("import") {
                self.skip_to_semicolon()?;
            } else {
                self.parse_class_def(&prefix, &mut pending)?;
            }
        }

        self.assign_documentation(&mut pending);
        Ok(pending.into_iter().map(|p| p.component).collect())
    }

    /// Attach each Documentation annotation to the innermost component whose
    /// token span contains it.
    fn assign_documentation(&self, pending: &mut [PendingComponent]) {
        for (raw_idx, text) in &self.marks.documentation {
            let mut best: Option<usize> = None;
            for (i, p) in pending.iter().enumerate() {
                let (s, e) = p.span;
                if *raw_idx >= s && *raw_idx <= e {
                    let better = match best {
                        Some(b) => {
                            let (bs, be) = pending[b].span;
                            s >= bs && e <= be
                        }
                        None => true,
                    };
                    if better {
                        best = Some(i);
                    }
                }
            }
            if let Some(i) = best {
                let doc = &mut pending[i].component.documentation;
                if doc.is_empty() {
                    *doc = text.clone();
                } else {
                    doc.push('\n');
                    doc.push_str(text);
                }
            }
        }
    }

    /// True when the upcoming tokens start a class definition (possibly after
    /// class prefixes such as `partial` or `encapsulated`).
    fn lookahead_class_def(&self) -> bool {
        let mut p = self.pos;
        while let Some(t) = self.tok_at(p) {
            if t.kind != TokenKind::Keyword {
                return false;
            }
            if ComponentKind::from_keyword(&t.text, false).is_some() {
                return true;
            }
            if CLASS_PREFIXES.contains(&t.text.as_str()) {
                p += 1;
                continue;
            }
            return false;
        }
        false
    }

    fn parse_class_def(
        &mut self,
        prefix: &str,
        out: &mut Vec<PendingComponent>,
    ) -> Result<(), FrontendError> {
        let span_start = self.raw_idx();
        let mut partial = false;
        loop {
            match self.tok() {
                Some(t)
                    if t.kind == TokenKind::Keyword
                        && CLASS_PREFIXES.contains(&t.text.as_str()) =>
                {
                    if t.text == "partial" {
                        partial = true;
                    }
                    self.advance();
                }
                _ => break,
            }
        }
        let kind = match self.tok() {
            Some(t) if t.kind == TokenKind::Keyword => {
                match ComponentKind::from_keyword(&t.text, partial) {
                    Some(k) => {
                        self.advance();
                        k
                    }
                    None => return Err(self.error("a class keyword")),
                }
            }
            _ => return Err(self.error("a class keyword")),
        };
        let name = self.expect_ident()?;
        let qualified_name = if prefix.is_empty() {
            name.clone()
        } else {
            format!("{prefix}.{name}")
        };

        let mut component = Component {
            kind,
            name: name.clone(),
            qualified_name: qualified_name.clone(),
            description: String::new(),
            documentation: String::new(),
            parameters: Vec::new(),
            constants: Vec::new(),
            variables: Vec::new(),
            extends_clauses: Vec::new(),
            instantiations: Vec::new(),
            connects: Vec::new(),
            equations: Vec::new(),
            cleaned_source: String::new(),
        };

        // Short class definition: `type T = Real(unit="V") "comment";`
        if self.tok().is_some_and(|t| t.is_op("=")) {
            self.advance();
            let start = self.pos;
            let end = self.scan_to_semicolon()?;
            // A trailing string at paren depth zero is the comment.
            component.description = self.trailing_description(start, end);
            let span_end = self.sig[end];
            self.pos = end;
            self.expect_punct(";")?;
            component.cleaned_source =
                render_span(self.lexed, self.marks, span_start, span_end).trim().to_string();
            out.push(PendingComponent { component, span: (span_start, span_end) });
            return Ok(());
        }

        component.description = self.parse_string_comment();

        let mut children = Vec::new();
        #[derive(PartialEq)]
        enum Section {
            Declarations,
            Equations,
            Statements,
        }
        let mut section = Section::Declarations;

        let span_end;
        loop {
            let tok = match self.tok() {
                Some(t) => t,
                None => return Err(self.error(&format!("'end {name}'"))),
            };
            if tok.is_keyword("end") {
                self.advance();
                let end_name = self.expect_ident()?;
                if end_name != name {
                    return Err(self.error(&format!("'end {name}'")));
                }
                match self.tok() {
                    Some(t) if t.is_punct(";") => {
                        span_end = self.raw_idx();
                        self.advance();
                    }
                    _ => return Err(self.error("';'")),
                }
                break;
            }
            if tok.is_punct(";") {
                self.advance();
                continue;
            }
            if tok.is_keyword("equation") {
                self.advance();
                section = Section::Equations;
                continue;
            }
            if tok.is_keyword("algorithm") {
                self.advance();
                section = Section::Statements;
                continue;
            }
            if tok.is_keyword("initial") {
                self.advance();
                if self.tok().is_some_and(|t| t.is_keyword("equation") || t.is_keyword("algorithm"))
                {
                    self.advance();
                    section = Section::Statements;
                    continue;
                }
                return Err(self.error("'equation' or 'algorithm'"));
            }
            if tok.is_keyword("public") || tok.is_keyword("protected") {
                self.advance();
                section = Section::Declarations;
                continue;
            }
            if tok.is_keyword("external") {
                self.skip_to_semicolon()?;
                continue;
            }
            if tok.is_keyword("annotation") {
                self.skip_annotation_clause()?;
                if self.tok().is_some_and(|t| t.is_punct(";")) {
                    self.advance();
                }
                continue;
            }
            match section {
                Section::Declarations => self.parse_element(&mut component, &qualified_name, &mut children)?,
                Section::Equations => self.parse_equation(&mut component)?,
                Section::Statements => self.skip_statement()?,
            }
        }

        component.cleaned_source =
            render_span(self.lexed, self.marks, span_start, span_end).trim().to_string();
        out.push(PendingComponent { component, span: (span_start, span_end) });
        out.append(&mut children);
        Ok(())
    }

    fn parse_element(
        &mut self,
        component: &mut Component,
        qualified_name: &str,
        children: &mut Vec<PendingComponent>,
    ) -> Result<(), FrontendError> {
        let tok = self.tok().unwrap();
        if tok.is_keyword("extends") {
            self.advance();
            let path = self.parse_type_path()?;
            component.extends_clauses.push(path);
            self.skip_to_semicolon()?;
            return Ok(());
        }
        if tok.is_keyword("import") {
            self.skip_to_semicolon()?;
            return Ok(());
        }
        if self.lookahead_class_def() {
            // `redeclare`/`replaceable` long definitions parse like nested
            // classes; their redeclaration semantics are out of subset.
            return self.parse_class_def(qualified_name, children);
        }
        self.parse_component_clause(component)
    }

    fn parse_component_clause(&mut self, component: &mut Component) -> Result<(), FrontendError> {
        let clause_start = self.pos;
        let clause_end = self.scan_to_semicolon()?;

        // Constructs outside the subset stay verbatim in the source only.
        let leading = self.tok().unwrap();
        let unsupported_prefix = leading.kind == TokenKind::Keyword
            && matches!(leading.text.as_str(), "redeclare" | "replaceable" | "inner" | "outer");
        let conditional = (clause_start..clause_end).any(|p| {
            self.tok_at(p).is_some_and(|t| t.is_keyword("if")) && self.depth_at(clause_start, p) == 0
        });
        if unsupported_prefix || conditional {
            self.pos = clause_end + 1;
            return Ok(());
        }

        let mut is_parameter = false;
        let mut is_constant = false;
        while let Some(t) = self.tok() {
            if t.kind == TokenKind::Keyword && COMPONENT_PREFIXES.contains(&t.text.as_str()) {
                match t.text.as_str() {
                    "parameter" => is_parameter = true,
                    "constant" => is_constant = true,
                    _ => {}
                }
                self.advance();
            } else {
                break;
            }
        }

        let type_path = self.parse_type_path()?;
        self.skip_subscripts()?;

        loop {
            let name = self.expect_ident()?;
            self.skip_subscripts()?;

            let mut modifiers = Vec::new();
            if self.tok().is_some_and(|t| t.is_punct("(")) {
                modifiers = self.parse_modification_args()?;
            }
            let mut default = None;
            if self.tok().is_some_and(|t| t.is_op("=") || t.is_op(":=")) {
                self.advance();
                let start = self.pos;
                let end = self.scan_expression_end(clause_end);
                default = Some(self.text_of(start, end));
                self.pos = end;
            }
            let description = self.parse_string_comment();
            if self.tok().is_some_and(|t| t.is_keyword("annotation")) {
                self.skip_annotation_clause()?;
            }

            let start_value = modifiers
                .iter()
                .find(|(n, _)| n == "start")
                .map(|(_, v)| v.clone());

            if is_parameter || is_constant {
                let param = Parameter {
                    name,
                    type_name: type_path.clone(),
                    default,
                    description,
                    start_value,
                };
                if is_constant {
                    component.constants.push(param);
                } else {
                    component.parameters.push(param);
                }
            } else if is_builtin_type(&type_path) {
                // A binding on a plain variable (`Real x = 1;`) is kept as its
                // start value: the micro simulator treats unbound algebraic
                // variables as constant at their start.
                component.variables.push(Variable {
                    name,
                    type_name: type_path.clone(),
                    start_value: start_value.or(default),
                    description,
                });
            } else {
                component.instantiations.push(Instantiation {
                    instance_name: name,
                    type_path: type_path.clone(),
                    modifiers: modifiers.clone(),
                });
            }

            match self.tok() {
                Some(t) if t.is_punct(",") => {
                    self.advance();
                }
                Some(t) if t.is_punct(";") => {
                    self.advance();
                    return Ok(());
                }
                _ => return Err(self.error("',' or ';'")),
            }
        }
    }

    /// Parse `( name = expr, ... )`, returning simple `name = expr` pairs.
    /// Nested or prefixed arguments are captured as (head, remainder-text).
    fn parse_modification_args(&mut self) -> Result<Vec<(String, String)>, FrontendError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        let mut depth = 1usize;
        let mut arg_start = self.pos;
        let mut close = self.pos;
        while depth > 0 {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("')'")),
            };
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                depth -= 1;
                if depth == 0 {
                    close = self.pos;
                    self.advance();
                    break;
                }
            } else if t.is_punct(",") && depth == 1 {
                args.push((arg_start, self.pos));
                self.advance();
                arg_start = self.pos;
                continue;
            }
            self.advance();
        }
        args.push((arg_start, close));

        let mut out = Vec::new();
        for (start, end) in args {
            if start >= end {
                continue;
            }
            if let Some((name, value)) = self.split_modifier(start, end) {
                out.push((name, value));
            }
        }
        Ok(out)
    }

    fn split_modifier(&self, start: usize, end: usize) -> Option<(String, String)> {
        let mut p = start;
        // Skip modifier prefixes such as `final` or `each`.
        while self
            .tok_at(p)
            .is_some_and(|t| t.kind == TokenKind::Keyword && matches!(t.text.as_str(), "final" | "each"))
        {
            p += 1;
        }
        let name_start = p;
        let mut name = String::new();
        while let Some(t) = self.tok_at(p) {
            if p >= end {
                break;
            }
            if t.kind == TokenKind::Identifier && (p == name_start || name.ends_with('.')) {
                name.push_str(&t.text);
                p += 1;
            } else if t.is_punct(".") && !name.is_empty() && !name.ends_with('.') {
                name.push('.');
                p += 1;
            } else {
                break;
            }
        }
        if name.is_empty() || name.ends_with('.') {
            return None;
        }
        if self.tok_at(p).is_some_and(|t| t.is_op("=")) && p < end {
            Some((name, self.text_of(p + 1, end)))
        } else if p < end {
            Some((name, self.text_of(p, end)))
        } else {
            // A bare name with no value, e.g. `(final unit)`.
            Some((name, String::new()))
        }
    }

    fn parse_equation(&mut self, component: &mut Component) -> Result<(), FrontendError> {
        let tok = self.tok().unwrap();
        if tok.is_keyword("connect") {
            return self.parse_connect(component);
        }
        if tok.is_keyword("when") {
            return self.parse_when(component);
        }
        if tok.is_keyword("for") || tok.is_keyword("if") || tok.is_keyword("while") {
            return self.skip_block();
        }

        let start = self.pos;
        let end = self.scan_to_semicolon()?;
        let text_end = end;
        self.pos = end + 1;

        // der(<ident>) = <expr>
        if self.tok_at(start).is_some_and(|t| t.is_keyword("der"))
            && self.tok_at(start + 1).is_some_and(|t| t.is_punct("("))
            && self.tok_at(start + 2).is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.tok_at(start + 3).is_some_and(|t| t.is_punct(")"))
            && self.tok_at(start + 4).is_some_and(|t| t.is_op("="))
        {
            let state = self.tok_at(start + 2).unwrap().text.clone();
            let rhs = self.text_of(start + 5, text_end);
            let text = self.text_of(start, text_end);
            component.equations.push(Equation::Derivative { state, rhs, text });
            return Ok(());
        }

        let has_top_level_eq = (start..end).any(|p| {
            self.tok_at(p).is_some_and(|t| t.is_op("=")) && self.depth_at(start, p) == 0
        });
        if has_top_level_eq {
            let text = self.text_of(start, text_end);
            component.equations.push(Equation::Simple { text });
        }
        // Otherwise (e.g. `assert(...)`) the statement stays verbatim in the
        // cleaned source only.
        Ok(())
    }

    fn parse_connect(&mut self, component: &mut Component) -> Result<(), FrontendError> {
        self.advance();
        self.expect_punct("(")?;
        let mut depth = 1usize;
        let mut parts = Vec::new();
        let mut part_start = self.pos;
        while depth > 0 {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("')'")),
            };
            if t.is_punct("(") || t.is_punct("[") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") {
                depth -= 1;
                if depth == 0 {
                    parts.push((part_start, self.pos));
                    self.advance();
                    break;
                }
            } else if t.is_punct(",") && depth == 1 {
                parts.push((part_start, self.pos));
                self.advance();
                part_start = self.pos;
                continue;
            }
            self.advance();
        }
        if parts.len() != 2 {
            return Err(self.error("two connect endpoints"));
        }
        let lhs = self.text_of(parts[0].0, parts[0].1);
        let rhs = self.text_of(parts[1].0, parts[1].1);
        if lhs.is_empty() || rhs.is_empty() {
            return Err(self.error("a connector reference"));
        }
        self.skip_to_semicolon()?;
        component.connects.push(Connect { lhs, rhs });
        Ok(())
    }

    fn parse_when(&mut self, component: &mut Component) -> Result<(), FrontendError> {
        let when_start = self.pos;
        self.advance();
        let mut branches: Vec<(String, Vec<WhenAction>)> = Vec::new();
        let mut condition = self.scan_condition()?;
        let mut actions = Vec::new();
        let when_end;
        loop {
            let tok = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("'end when'")),
            };
            if tok.is_keyword("elsewhen") {
                self.advance();
                branches.push((condition, std::mem::take(&mut actions)));
                condition = self.scan_condition()?;
                continue;
            }
            if tok.is_keyword("end") {
                self.advance();
                self.expect_keyword("when")?;
                when_end = self.pos;
                self.expect_punct(";")?;
                branches.push((condition, actions));
                break;
            }
            let start = self.pos;
            let end = self.scan_to_semicolon()?;
            self.pos = end + 1;
            actions.push(self.parse_when_action(start, end));
        }

        let full_text = self.text_of(when_start, when_end + 1);
        let mut first = true;
        for (cond, body) in branches {
            let text = if first { full_text.clone() } else { format!("when {cond} then …") };
            first = false;
            component.equations.push(Equation::When { condition: cond, body, text });
        }
        Ok(())
    }

    fn parse_when_action(&self, start: usize, end: usize) -> WhenAction {
        // reinit(<target>, <expr>)
        if self.tok_at(start).is_some_and(|t| t.kind == TokenKind::Identifier && t.text == "reinit")
            && self.tok_at(start + 1).is_some_and(|t| t.is_punct("("))
        {
            let mut depth = 0usize;
            let mut comma = None;
            let mut close = None;
            for p in start + 1..end {
                let t = self.tok_at(p).unwrap();
                if t.is_punct("(") {
                    depth += 1;
                } else if t.is_punct(")") {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(p);
                        break;
                    }
                } else if t.is_punct(",") && depth == 1 && comma.is_none() {
                    comma = Some(p);
                }
            }
            if let (Some(comma), Some(close)) = (comma, close) {
                return WhenAction::Reinit {
                    target: self.text_of(start + 2, comma),
                    expr: self.text_of(comma + 1, close),
                };
            }
        }
        let eq_pos = (start..end).find(|&p| {
            self.tok_at(p).is_some_and(|t| t.is_op("=") || t.is_op(":=")) && self.depth_at(start, p) == 0
        });
        match eq_pos {
            Some(p) => WhenAction::Assign {
                lhs: self.text_of(start, p),
                rhs: self.text_of(p + 1, end),
            },
            None => WhenAction::Other(self.text_of(start, end)),
        }
    }

    fn scan_condition(&mut self) -> Result<String, FrontendError> {
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("'then'")),
            };
            if t.is_punct("(") || t.is_punct("[") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") {
                depth = depth.saturating_sub(1);
            } else if t.is_keyword("then") && depth == 0 {
                let text = self.text_of(start, self.pos);
                self.advance();
                return Ok(text);
            }
            self.advance();
        }
    }

    /// Skip a `for`/`if`/`while` block equation, tracking nested blocks. The
    /// construct is preserved in the cleaned source only.
    fn skip_block(&mut self) -> Result<(), FrontendError> {
        let mut depth = 1usize;
        let mut statement_position = false;
        self.advance();
        loop {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("'end'")),
            };
            if t.is_keyword("end") {
                let next_is_block = self
                    .tok_at(self.pos + 1)
                    .is_some_and(|n| matches!(n.text.as_str(), "if" | "for" | "while" | "when"));
                if next_is_block {
                    self.advance();
                    self.advance();
                    depth -= 1;
                    if depth == 0 {
                        self.skip_to_semicolon()?;
                        return Ok(());
                    }
                    continue;
                }
                return Err(self.error("'end if', 'end for' or 'end while'"));
            }
            if t.kind == TokenKind::Keyword
                && matches!(t.text.as_str(), "if" | "for" | "while" | "when")
                && statement_position
            {
                depth += 1;
            }
            statement_position = t.is_punct(";")
                || (t.kind == TokenKind::Keyword
                    && matches!(t.text.as_str(), "then" | "else" | "loop" | "elseif" | "elsewhen"));
            self.advance();
        }
    }

    fn skip_statement(&mut self) -> Result<(), FrontendError> {
        let tok = self.tok().unwrap();
        if tok.is_keyword("for") || tok.is_keyword("if") || tok.is_keyword("while")
            || tok.is_keyword("when")
        {
            return self.skip_block();
        }
        let end = self.scan_to_semicolon()?;
        self.pos = end + 1;
        Ok(())
    }

    /// Paren/bracket depth of significant position `p` relative to `start`.
    fn depth_at(&self, start: usize, p: usize) -> usize {
        let mut depth = 0usize;
        for q in start..p {
            if let Some(t) = self.tok_at(q) {
                if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                    depth += 1;
                } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                    depth = depth.saturating_sub(1);
                }
            }
        }
        depth
    }

    /// Position of the next `;` at depth zero, without consuming it. Errors
    /// on a bare `end` or end of input, which both indicate a missing `;`.
    fn scan_to_semicolon(&mut self) -> Result<usize, FrontendError> {
        let mut depth = 0usize;
        let mut p = self.pos;
        loop {
            let t = match self.tok_at(p) {
                Some(t) => t,
                None => {
                    self.pos = p;
                    return Err(self.error("';'"));
                }
            };
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                depth = depth.saturating_sub(1);
            } else if t.is_punct(";") && depth == 0 {
                return Ok(p);
            } else if t.is_keyword("end") && depth == 0 {
                self.pos = p;
                return Err(self.error("';'"));
            }
            p += 1;
        }
    }

    fn skip_to_semicolon(&mut self) -> Result<(), FrontendError> {
        let end = self.scan_to_semicolon()?;
        self.pos = end + 1;
        Ok(())
    }

    /// End of a binding expression: stops at a top-level `,`, `;`,
    /// `annotation`, or a string comment that follows a complete expression.
    fn scan_expression_end(&mut self, limit: usize) -> usize {
        let mut depth = 0usize;
        let mut prev_is_operand = false;
        let mut p = self.pos;
        while p <= limit {
            let t = match self.tok_at(p) {
                Some(t) => t,
                None => break,
            };
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                depth += 1;
            } else if t.is_punct(")") || t.is_punct("]") || t.is_punct("}") {
                if depth == 0 {
                    break;
                }
                depth -= 1;
            } else if depth == 0 {
                if t.is_punct(",") || t.is_punct(";") || t.is_keyword("annotation") {
                    break;
                }
                if t.kind == TokenKind::String && prev_is_operand {
                    break;
                }
            }
            prev_is_operand = matches!(
                t.kind,
                TokenKind::Identifier | TokenKind::Number | TokenKind::String
            ) || t.is_punct(")")
                || t.is_punct("]")
                || t.is_punct("}")
                || t.is_keyword("true")
                || t.is_keyword("false");
            p += 1;
        }
        p
    }

    fn skip_subscripts(&mut self) -> Result<(), FrontendError> {
        if !self.tok().is_some_and(|t| t.is_punct("[")) {
            return Ok(());
        }
        let mut depth = 0usize;
        loop {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("']'")),
            };
            if t.is_punct("[") {
                depth += 1;
            } else if t.is_punct("]") {
                depth -= 1;
                if depth == 0 {
                    self.advance();
                    return Ok(());
                }
            }
            self.advance();
        }
    }

    fn skip_annotation_clause(&mut self) -> Result<(), FrontendError> {
        self.expect_keyword("annotation")?;
        self.expect_punct("(")?;
        let mut depth = 1usize;
        while depth > 0 {
            let t = match self.tok() {
                Some(t) => t,
                None => return Err(self.error("')'")),
            };
            if t.is_punct("(") {
                depth += 1;
            } else if t.is_punct(")") {
                depth -= 1;
            }
            self.advance();
        }
        Ok(())
    }

    /// `ident(.ident)*`, with an optional leading `.` for global paths.
    fn parse_type_path(&mut self) -> Result<String, FrontendError> {
        let mut path = String::new();
        if self.tok().is_some_and(|t| t.is_punct(".")) {
            path.push('.');
            self.advance();
        }
        path.push_str(&self.expect_ident()?);
        while self.tok().is_some_and(|t| t.is_punct("."))
            && self.tok_at(self.pos + 1).is_some_and(|t| t.kind == TokenKind::Identifier)
        {
            self.advance();
            path.push('.');
            path.push_str(&self.expect_ident()?);
        }
        Ok(path)
    }

    /// `"text"` possibly continued with `+ "more"`; returns unescaped content.
    fn parse_string_comment(&mut self) -> String {
        let mut out = String::new();
        let mut first = true;
        loop {
            match self.tok() {
                Some(t) if t.kind == TokenKind::String && first => {
                    out.push_str(&string_content(&t.text));
                    self.advance();
                    first = false;
                }
                Some(t)
                    if !first
                        && t.is_op("+")
                        && self.tok_at(self.pos + 1).is_some_and(|n| n.kind == TokenKind::String) =>
                {
                    self.advance();
                    out.push_str(&string_content(&self.tok().unwrap().text));
                    self.advance();
                }
                _ => break,
            }
        }
        out
    }

    /// Description string of a short class definition body `start..end`:
    /// the trailing depth-zero string token, if present.
    fn trailing_description(&self, start: usize, end: usize) -> String {
        let mut p = end;
        while p > start {
            p -= 1;
            let t = self.tok_at(p).unwrap();
            if t.is_keyword("annotation") || t.is_punct(")") {
                continue;
            }
            if t.kind == TokenKind::String && self.depth_at(start, p) == 0 {
                let prev_operand = p > start
                    && self.tok_at(p - 1).is_some_and(|t| {
                        matches!(t.kind, TokenKind::Identifier | TokenKind::Number)
                            || t.is_punct(")")
                    });
                if prev_operand {
                    return string_content(&t.text);
                }
            }
            break;
        }
        String::new()
    }
}

/// Strip quotes and resolve backslash escapes of a string token.
pub fn string_content(text: &str) -> String {
    let inner = text.strip_prefix('"').unwrap_or(text);
    let inner = inner.strip_suffix('"').unwrap_or(inner);
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('\'') => out.push('\''),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Collapse every whitespace run to a single space and trim.
pub fn squash_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_ws = false;
    for c in text.chars() {
        if c.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = false;
            out.push(c);
        }
    }
    out
}
