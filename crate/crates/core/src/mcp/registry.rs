//! Tool registry and parameter validation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{Map, Value};

use super::protocol::{RpcError, RpcRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
}

impl ParamKind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ParamKind::String => v.is_string(),
            ParamKind::Integer => v.is_i64() || v.is_u64(),
            ParamKind::Number => v.is_number(),
            ParamKind::Boolean => v.is_boolean(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
        }
    }
}

/// Declared parameter of a tool.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    pub default: Option<Value>,
    pub allowed: Option<Vec<Value>>,
    pub minimum: Option<f64>,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
            default: None,
            allowed: None,
            minimum: None,
        }
    }

    pub fn optional(name: &str, kind: ParamKind, default: Value) -> Self {
        Self {
            required: false,
            default: Some(default),
            ..Self::required(name, kind)
        }
    }

    pub fn one_of(mut self, allowed: Vec<Value>) -> Self {
        self.allowed = Some(allowed);
        self
    }

    pub fn at_least(mut self, minimum: f64) -> Self {
        self.minimum = Some(minimum);
        self
    }

    fn check(&self, v: &Value) -> Result<(), RpcError> {
        if !self.kind.accepts(v) {
            return Err(RpcError::invalid_params(format!(
                "{} must be a {}",
                self.name,
                self.kind.name()
            )));
        }
        if let Some(allowed) = &self.allowed {
            if !allowed.contains(v) {
                return Err(RpcError::invalid_params(format!("unknown {} {v}", self.name))
                    .with_data(serde_json::json!({ "param": self.name, "value": v })));
            }
        }
        if let (Some(min), Some(x)) = (self.minimum, v.as_f64()) {
            if x < min {
                return Err(RpcError::invalid_params(format!("{} must be >= {min}", self.name)));
            }
        }
        Ok(())
    }
}

/// Successful tool output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub result: Value,
    pub uncertainty: Option<f64>,
}

/// A callable tool with a declared parameter schema.
pub trait Tool: Send + Sync {
    fn name(&self) -> &str;

    fn params(&self) -> &[ParamSpec];

    /// Runs the tool on parameters that already passed validation.
    fn call(&self, params: &Map<String, Value>) -> Result<ToolOutput, RpcError>;

    /// Text recorded in the `query` field of the call log.
    fn query_text(&self, params: &Map<String, Value>) -> String {
        Value::Object(params.clone()).to_string()
    }
}

/// A resolved method with its parameters checked and defaults filled.
#[derive(Clone)]
pub struct ValidatedCall {
    pub tool: Arc<dyn Tool>,
    pub params: Map<String, Value>,
}

impl std::fmt::Debug for ValidatedCall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValidatedCall")
            .field("tool", &self.tool.name())
            .field("params", &self.params)
            .finish()
    }
}

#[derive(Default, Clone)]
pub struct Registry {
    tools: BTreeMap<String, Arc<dyn Tool>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tool, replacing any tool with the same name.
    pub fn register(&mut self, tool: Arc<dyn Tool>) {
        self.tools.insert(tool.name().to_owned(), tool);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }
}

/// Resolves the method and checks params against the tool's schema.
/// Unknown parameter names are rejected.
pub fn validate_request(req: &RpcRequest, registry: &Registry) -> Result<ValidatedCall, RpcError> {
    let tool = registry
        .get(&req.method)
        .ok_or_else(|| RpcError::method_not_found(&req.method))?
        .clone();
    let specs = tool.params();
    if let Some(unknown) = req.params.keys().find(|k| !specs.iter().any(|s| &s.name == *k)) {
        return Err(RpcError::invalid_params(format!("unknown parameter {unknown:?}")));
    }
    let mut params = Map::new();
    for spec in specs {
        match req.params.get(&spec.name) {
            Some(v) => {
                spec.check(v)?;
                params.insert(spec.name.clone(), v.clone());
            }
            None if spec.required => {
                return Err(RpcError::invalid_params(format!(
                    "missing required parameter {:?}",
                    spec.name
                )))
            }
            None => {
                if let Some(d) = &spec.default {
                    params.insert(spec.name.clone(), d.clone());
                }
            }
        }
    }
    Ok(ValidatedCall { tool, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcp::protocol::{INVALID_PARAMS, METHOD_NOT_FOUND};
    use serde_json::json;

    struct Echo(Vec<ParamSpec>);

    impl Tool for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn params(&self) -> &[ParamSpec] {
            &self.0
        }
        fn call(&self, params: &Map<String, Value>) -> Result<ToolOutput, RpcError> {
            Ok(ToolOutput {
                result: Value::Object(params.clone()),
                uncertainty: None,
            })
        }
    }

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.register(Arc::new(Echo(vec![
            ParamSpec::required("color", ParamKind::String).one_of(vec![json!("red"), json!("blue")]),
            ParamSpec::optional("n", ParamKind::Integer, json!(3)).at_least(1.0),
        ])));
        r
    }

    fn req(params: Value) -> RpcRequest {
        let Value::Object(p) = params else { unreachable!() };
        RpcRequest::new("echo", p, 1)
    }

    #[test]
    fn defaults_are_filled() {
        let call = validate_request(&req(json!({"color": "red"})), &registry()).unwrap();
        assert_eq!(call.params["n"], json!(3));
    }

    #[test]
    fn schema_violations() {
        let r = registry();
        for bad in [
            json!({}),
            json!({"color": "green"}),
            json!({"color": 1}),
            json!({"color": "red", "n": 0}),
            json!({"color": "red", "n": 1.5}),
            json!({"color": "red", "extra": 1}),
        ] {
            assert_eq!(
                validate_request(&req(bad.clone()), &r).unwrap_err().code,
                INVALID_PARAMS,
                "{bad}"
            );
        }
    }

    #[test]
    fn unknown_method() {
        let mut q = req(json!({}));
        q.method = "no_such_tool".into();
        assert_eq!(validate_request(&q, &registry()).unwrap_err().code, METHOD_NOT_FOUND);
    }
}
