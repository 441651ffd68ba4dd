//! JSON-RPC 2.0 message types with the `context` and `uncertainty` extensions.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

/// Request identifier: an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequestId {
    Num(i64),
    Str(String),
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestId::Num(n) => write!(f, "{n}"),
            RequestId::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for RequestId {
    fn from(n: i64) -> Self {
        RequestId::Num(n)
    }
}

impl From<&str> for RequestId {
    fn from(s: &str) -> Self {
        RequestId::Str(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            data: None,
        }
    }

    pub fn with_data(mut self, data: Value) -> Self {
        self.data = Some(data);
        self
    }

    pub fn parse(detail: impl fmt::Display) -> Self {
        Self::new(PARSE_ERROR, "Parse error").with_data(Value::String(detail.to_string()))
    }

    pub fn invalid_request(detail: impl Into<String>) -> Self {
        Self::new(INVALID_REQUEST, "Invalid Request").with_data(Value::String(detail.into()))
    }

    pub fn method_not_found(method: &str) -> Self {
        Self::new(METHOD_NOT_FOUND, format!("Method not found: {method}"))
    }

    pub fn invalid_params(detail: impl Into<String>) -> Self {
        Self::new(INVALID_PARAMS, format!("Invalid params: {}", detail.into()))
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(INTERNAL_ERROR, format!("Internal error: {}", detail.into()))
    }
}

impl fmt::Display for RpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl std::error::Error for RpcError {}

/// A validated request envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcRequest {
    pub method: String,
    pub params: Map<String, Value>,
    /// `None` marks a notification, which gets no response.
    pub id: Option<RequestId>,
    pub context: Option<Map<String, Value>>,
}

impl RpcRequest {
    pub fn new(method: impl Into<String>, params: Map<String, Value>, id: impl Into<RequestId>) -> Self {
        Self {
            method: method.into(),
            params,
            id: Some(id.into()),
            context: None,
        }
    }

    pub fn with_session(mut self, session_id: &str) -> Self {
        let mut ctx = Map::new();
        ctx.insert("session_id".into(), Value::String(session_id.into()));
        self.context = Some(ctx);
        self
    }

    pub fn session_id(&self) -> Option<&str> {
        self.context.as_ref()?.get("session_id")?.as_str()
    }

    /// Parses one wire line. On failure returns the error response to send
    /// (with the request id when it could be recovered).
    pub fn parse_line(line: &str) -> Result<Self, RpcResponse> {
        let value: Value = serde_json::from_str(line).map_err(|e| RpcResponse::failure(None, RpcError::parse(e)))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, RpcResponse> {
        let Value::Object(mut obj) = value else {
            return Err(RpcResponse::failure(
                None,
                RpcError::invalid_request("request must be an object"),
            ));
        };
        let id = match obj.remove("id") {
            None => None,
            Some(Value::String(s)) => Some(RequestId::Str(s)),
            Some(Value::Number(n)) => match n.as_i64() {
                Some(i) => Some(RequestId::Num(i)),
                None => {
                    return Err(RpcResponse::failure(
                        None,
                        RpcError::invalid_request("id must be an integer or a string"),
                    ))
                }
            },
            Some(_) => {
                return Err(RpcResponse::failure(
                    None,
                    RpcError::invalid_request("id must be an integer or a string"),
                ))
            }
        };
        let fail = |msg: &str| Err(RpcResponse::failure(id.clone(), RpcError::invalid_request(msg)));
        match obj.remove("jsonrpc") {
            Some(Value::String(v)) if v == "2.0" => {}
            _ => return fail("jsonrpc must be exactly \"2.0\""),
        }
        let method = match obj.remove("method") {
            Some(Value::String(m)) => m,
            _ => return fail("method must be a string"),
        };
        let params = match obj.remove("params") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(p)) => p,
            Some(_) => return fail("params must be an object"),
        };
        let context = match obj.remove("context") {
            None | Some(Value::Null) => None,
            Some(Value::Object(c)) => {
                if c.get("session_id").is_some_and(|s| !s.is_string()) {
                    return fail("context.session_id must be a string");
                }
                Some(c)
            }
            Some(_) => return fail("context must be an object"),
        };
        if let Some(extra) = obj.keys().next() {
            return fail(&format!("unexpected member {extra:?}"));
        }
        Ok(Self {
            method,
            params,
            id,
            context,
        })
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("jsonrpc".into(), Value::String("2.0".into()));
        obj.insert("method".into(), Value::String(self.method.clone()));
        obj.insert("params".into(), Value::Object(self.params.clone()));
        if let Some(id) = &self.id {
            obj.insert("id".into(), serde_json::to_value(id).expect("id serializes"));
        }
        if let Some(ctx) = &self.context {
            obj.insert("context".into(), Value::Object(ctx.clone()));
        }
        Value::Object(obj)
    }

    /// Compact JSON with lexicographically ordered keys.
    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }
}

/// A response carrying exactly one of `result` or `error`.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcResponse {
    pub outcome: Result<Value, RpcError>,
    pub uncertainty: Option<f64>,
    /// Serialized as `null` when the request id could not be determined.
    pub id: Option<RequestId>,
}

impl RpcResponse {
    pub fn success(id: Option<RequestId>, result: Value, uncertainty: Option<f64>) -> Self {
        Self {
            outcome: Ok(result),
            uncertainty: uncertainty.map(|u| u.clamp(0.0, 1.0)),
            id,
        }
    }

    pub fn failure(id: Option<RequestId>, error: RpcError) -> Self {
        Self {
            outcome: Err(error),
            uncertainty: None,
            id,
        }
    }

    pub fn result(&self) -> Option<&Value> {
        self.outcome.as_ref().ok()
    }

    pub fn error(&self) -> Option<&RpcError> {
        self.outcome.as_ref().err()
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("jsonrpc".into(), Value::String("2.0".into()));
        match &self.outcome {
            Ok(v) => {
                obj.insert("result".into(), v.clone());
            }
            Err(e) => {
                obj.insert("error".into(), serde_json::to_value(e).expect("error serializes"));
            }
        }
        if let Some(u) = self.uncertainty {
            obj.insert("uncertainty".into(), Value::from(u));
        }
        obj.insert(
            "id".into(),
            self.id
                .as_ref()
                .map_or(Value::Null, |id| serde_json::to_value(id).expect("id serializes")),
        );
        Value::Object(obj)
    }

    /// Compact JSON with lexicographically ordered keys.
    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }

    /// Parses a response produced by [`RpcResponse::to_line`] or a peer.
    pub fn from_value(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("response must be an object")?;
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
            return Err("jsonrpc must be \"2.0\"".into());
        }
        let outcome = match (obj.get("result"), obj.get("error")) {
            (Some(r), None) => Ok(r.clone()),
            (None, Some(e)) => Err(serde_json::from_value(e.clone()).map_err(|e| e.to_string())?),
            _ => return Err("exactly one of result and error must be present".into()),
        };
        let uncertainty = match obj.get("uncertainty") {
            None => None,
            Some(u) => {
                let u = u.as_f64().ok_or("uncertainty must be a number")?;
                if !(0.0..=1.0).contains(&u) {
                    return Err(format!("uncertainty {u} outside [0, 1]"));
                }
                Some(u)
            }
        };
        let id = match obj.get("id") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| e.to_string())?),
        };
        Ok(Self {
            outcome,
            uncertainty,
            id,
        })
    }
}
