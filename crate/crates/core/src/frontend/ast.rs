use serde::{Deserialize, Serialize};

/// Class category of a parsed definition. `partial model` is its own kind
/// because partial models are exempt from simulation validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    Model,
    PartialModel,
    Function,
    Block,
    Connector,
    Class,
    Record,
    Package,
    Type,
}

impl ComponentKind {
    pub fn from_keyword(kw: &str, partial: bool) -> Option<ComponentKind> {
        let kind = match kw {
            "model" => {
                if partial {
                    ComponentKind::PartialModel
                } else {
                    ComponentKind::Model
                }
            }
            "block" => ComponentKind::Block,
            "function" => ComponentKind::Function,
            "connector" => ComponentKind::Connector,
            "class" => ComponentKind::Class,
            "record" => ComponentKind::Record,
            "package" => ComponentKind::Package,
            "type" => ComponentKind::Type,
            _ => return None,
        };
        Some(kind)
    }
}

/// A `parameter` or `constant` declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub type_name: String,
    pub default: Option<String>,
    pub description: String,
    pub start_value: Option<String>,
}

/// A plain variable declaration of builtin type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub type_name: String,
    pub start_value: Option<String>,
    pub description: String,
}

/// A component instantiation: a declaration whose type is a class path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instantiation {
    pub instance_name: String,
    pub type_path: String,
    pub modifiers: Vec<(String, String)>,
}

/// A `connect(lhs, rhs)` statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connect {
    pub lhs: String,
    pub rhs: String,
}

/// One action inside a `when` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WhenAction {
    Reinit { target: String, expr: String },
    Assign { lhs: String, rhs: String },
    /// Anything else, kept verbatim; rejected by the micro simulator.
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Equation {
    Simple {
        text: String,
    },
    Derivative {
        state: String,
        rhs: String,
        text: String,
    },
    When {
        condition: String,
        body: Vec<WhenAction>,
        text: String,
    },
}

impl Equation {
    pub fn text(&self) -> &str {
        match self {
            Equation::Simple { text }
            | Equation::Derivative { text, .. }
            | Equation::When { text, .. } => text,
        }
    }
}

/// A parsed Modelica class definition. Constructs outside the supported
/// subset survive verbatim in `cleaned_source` but not in structured fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    pub name: String,
    /// Dot path from the library root; always ends with `name`.
    pub qualified_name: String,
    /// The string comment following the declaration header, if any.
    pub description: String,
    /// Content extracted from a `Documentation` annotation, if any.
    pub documentation: String,
    pub parameters: Vec<Parameter>,
    pub constants: Vec<Parameter>,
    pub variables: Vec<Variable>,
    pub extends_clauses: Vec<String>,
    pub instantiations: Vec<Instantiation>,
    pub connects: Vec<Connect>,
    pub equations: Vec<Equation>,
    /// Component source with annotations stripped and whitespace normalized.
    pub cleaned_source: String,
}

impl Component {
    /// Dot-path prefix of `qualified_name` (empty for a bare top-level name).
    pub fn qualified_prefix(&self) -> &str {
        match self.qualified_name.rfind('.') {
            Some(idx) => &self.qualified_name[..idx],
            None => "",
        }
    }
}

pub const BUILTIN_TYPES: &[&str] = &["Boolean", "Integer", "Real", "String"];

pub fn is_builtin_type(name: &str) -> bool {
    BUILTIN_TYPES.contains(&name)
}
