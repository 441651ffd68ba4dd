use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedder, EmbeddingVector, ProviderDescriptor};

#[derive(Serialize)]
struct BatchRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct BatchResponse {
    embeddings: Vec<Vec<f64>>,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_once(agent: &ureq::Agent, endpoint: &str, body: &str) -> Result<String, EmbedError> {
    let mut resp = agent
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body)
        .map_err(classify)?;
    let status = resp.status().as_u16();
    if status != 200 {
        return Err(EmbedError::Status(status));
    }
    resp.body_mut()
        .read_to_string()
        .map_err(|e| EmbedError::Transport(e.to_string()))
}

fn classify(err: ureq::Error) -> EmbedError {
    match err {
        ureq::Error::Timeout(t) => EmbedError::Timeout(t.to_string()),
        ureq::Error::StatusCode(code) => EmbedError::Status(code),
        other => EmbedError::Transport(other.to_string()),
    }
}

fn parse_batch(body: &str, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let parsed: BatchResponse = serde_json::from_str(body).map_err(|e| EmbedError::Parse(e.to_string()))?;
    if parsed.embeddings.len() != expected {
        return Err(EmbedError::CountMismatch {
            expected,
            actual: parsed.embeddings.len(),
        });
    }
    let dim = parsed.embeddings.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(expected);
    for raw in parsed.embeddings {
        if raw.len() != dim || dim < 2 {
            return Err(EmbedError::Parse(format!(
                "embedding of length {} in a batch of dimension {dim}",
                raw.len()
            )));
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Parse("non-finite embedding component".into()));
        }
        out.push(EmbeddingVector::normalized(raw));
    }
    Ok(out)
}

/// Embeds a batch of texts through an HTTP service.
///
/// Sends `{"texts": [...]}` and expects `{"embeddings": [[...], ...]}` in
/// the same order. Vectors are renormalized to unit length. A transport
/// failure is retried once; timeouts and bad statuses are not.
pub fn external_embed_batch(
    texts: &[&str],
    endpoint: &str,
    timeout: Duration,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::InvalidRequest("empty batch".into()));
    }
    let body = serde_json::to_string(&BatchRequest { texts }).map_err(|e| EmbedError::InvalidRequest(e.to_string()))?;
    let agent = agent(timeout);
    let text = match post_once(&agent, endpoint, &body) {
        Err(EmbedError::Transport(first)) => {
            log::warn!("embedding request to {endpoint} failed ({first}); retrying once");
            post_once(&agent, endpoint, &body)?
        }
        other => other?,
    };
    parse_batch(&text, texts.len())
}

/// [`Embedder`] backed by an HTTP embedding service.
///
/// Blank text short-circuits to the sentinel without a network call.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    endpoint: String,
    timeout: Duration,
    dim: usize,
}

impl ExternalEmbedder {
    /// `dim` is the dimension the service is expected to return.
    pub fn new(endpoint: impl Into<String>, timeout: Duration, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            dim,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Embedder for ExternalEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            name: format!("external:{}", self.endpoint),
            dim: self.dim,
            deterministic: false,
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let live: Vec<&str> = texts.iter().copied().filter(|t| !t.trim().is_empty()).collect();
        let mut fetched = if live.is_empty() {
            Vec::new().into_iter()
        } else {
            external_embed_batch(&live, &self.endpoint, self.timeout)?.into_iter()
        };
        let mut out = Vec::with_capacity(texts.len());
        for t in texts {
            if t.trim().is_empty() {
                out.push(EmbeddingVector::zero_sentinel(self.dim));
                continue;
            }
            let v = fetched.next().expect("count checked by parse_batch");
            if v.dim() != self.dim {
                return Err(EmbedError::DimensionMismatch {
                    left: self.dim,
                    right: v.dim(),
                });
            }
            out.push(v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_accepts_and_renormalizes() {
        let v = parse_batch(r#"{"embeddings": [[3.0, 4.0], [0.0, 2.0]]}"#, 2).unwrap();
        assert_eq!(v[0].as_slice(), &[0.6, 0.8]);
        assert_eq!(v[1].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn parse_rejects_wrong_count() {
        let err = parse_batch(r#"{"embeddings": [[1.0, 0.0]]}"#, 2).unwrap_err();
        assert!(matches!(err, EmbedError::CountMismatch { expected: 2, actual: 1 }));
        assert!(err.to_string().contains("expected 2"));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(parse_batch("not json", 1), Err(EmbedError::Parse(_))));
        assert!(matches!(
            parse_batch(r#"{"embeddings": [[1.0, 0.0], [1.0]]}"#, 2),
            Err(EmbedError::Parse(_))
        ));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let err = external_embed_batch(&[], "http://127.0.0.1:9", Duration::from_millis(50));
        assert!(matches!(err, Err(EmbedError::InvalidRequest(_))));
    }
}
