//! HTTP provider adapter.
//!
//! Chat-style and completion-style APIs are normalized to one text-in /
//! text-out contract through a request template with `"{prompt}"`,
//! `"{model}"`, `{temperature}` and `{max_tokens}` slots, plus a dotted JSON
//! path that locates the reply text in the response body. The two built-in
//! styles cover the common public API shapes; both slots can be overridden
//! per model spec.

use std::time::Duration;

use serde_json::Value;

use super::pool::GatewayStats;
use super::{GatewayError, ModelSpec, ProviderKind, RetryPolicy};

pub const OPENAI_STYLE_TEMPLATE: &str = r#"{"model":"{model}","messages":[{"role":"user","content":"{prompt}"}],"temperature":{temperature},"max_tokens":{max_tokens}}"#;
pub const OPENAI_STYLE_PATH: &str = "choices.0.message.content";

pub const GEMINI_STYLE_TEMPLATE: &str = r#"{"contents":[{"parts":[{"text":"{prompt}"}]}],"generationConfig":{"temperature":{temperature},"maxOutputTokens":{max_tokens}}}"#;
pub const GEMINI_STYLE_PATH: &str = "candidates.0.content.parts.0.text";

pub fn default_template(kind: ProviderKind) -> &'static str {
    match kind {
        ProviderKind::HttpGeminiStyle => GEMINI_STYLE_TEMPLATE,
        _ => OPENAI_STYLE_TEMPLATE,
    }
}

pub fn default_response_path(kind: ProviderKind) -> &'static str {
    match kind {
        ProviderKind::HttpGeminiStyle => GEMINI_STYLE_PATH,
        _ => OPENAI_STYLE_PATH,
    }
}

/// Fill the template slots. String slots (`"{prompt}"`, `"{model}"`) must
/// appear as complete JSON string values; they are replaced with properly
/// escaped literals.
pub fn render_body(
    template: &str,
    model_name: &str,
    prompt: &str,
    temperature: f64,
    max_tokens: u32,
) -> Result<String, GatewayError> {
    let prompt_literal = serde_json::to_string(prompt).expect("string serializes");
    let model_literal = serde_json::to_string(model_name).expect("string serializes");
    let body = template
        .replace("\"{prompt}\"", &prompt_literal)
        .replace("\"{model}\"", &model_literal)
        .replace("{temperature}", &format!("{temperature}"))
        .replace("{max_tokens}", &format!("{max_tokens}"));
    // The rendered body must be valid JSON; catching it here beats a
    // confusing 400 from the remote side.
    serde_json::from_str::<Value>(&body)
        .map_err(|e| GatewayError::Config(format!("request template renders invalid JSON: {e}")))?;
    Ok(body)
}

/// Resolve a dotted path like `choices.0.message.content` against a JSON
/// value; numeric segments index arrays.
pub fn extract_text<'a>(value: &'a Value, path: &str) -> Option<&'a str> {
    let mut current = value;
    for segment in path.split('.') {
        current = match current {
            Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
            Value::Object(map) => map.get(segment)?,
            _ => return None,
        };
    }
    current.as_str()
}

fn auth_header(spec: &ModelSpec) -> Result<Option<(&'static str, String)>, GatewayError> {
    let Some(var) = spec.auth_env_var.as_deref().filter(|v| !v.is_empty()) else {
        return Ok(None);
    };
    let secret = std::env::var(var).map_err(|_| {
        GatewayError::Config(format!(
            "auth env var {var} is not set for model {}",
            spec.model_name
        ))
    })?;
    Ok(Some(match spec.provider {
        ProviderKind::HttpGeminiStyle => ("x-goog-api-key", secret),
        _ => ("authorization", format!("Bearer {secret}")),
    }))
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POST the body with bounded retries and exponential backoff. 429 and 5xx
/// retry; auth failures and other 4xx do not.
pub fn execute(
    agent: &ureq::Agent,
    spec: &ModelSpec,
    body: &str,
    response_path: &str,
    retry: &RetryPolicy,
    stats: &GatewayStats,
) -> Result<String, GatewayError> {
    let auth = auth_header(spec)?;
    let mut last_error = String::new();
    let mut last_status = None;
    for attempt in 0..retry.max_attempts {
        if attempt > 0 {
            std::thread::sleep(backoff_delay(retry, attempt - 1));
        }
        stats.record_network_call();
        let mut request = agent
            .post(&spec.endpoint_url)
            .header("content-type", "application/json");
        if let Some((name, value)) = &auth {
            request = request.header(*name, value.as_str());
        }
        match request.send(body) {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if status == 401 || status == 403 {
                    return Err(GatewayError::Auth {
                        status,
                        model: spec.model_name.clone(),
                    });
                }
                let text = response.body_mut().read_to_string().unwrap_or_default();
                if (200..300).contains(&status) {
                    match serde_json::from_str::<Value>(&text)
                        .ok()
                        .as_ref()
                        .and_then(|v| extract_text(v, response_path))
                    {
                        Some(reply) => return Ok(reply.to_string()),
                        None => {
                            last_status = Some(status);
                            last_error =
                                format!("response body missing text at path {response_path:?}");
                            continue;
                        }
                    }
                }
                last_status = Some(status);
                last_error = truncate(&text, 200);
                if !retryable_status(status) {
                    break;
                }
            }
            Err(e) => {
                last_status = None;
                last_error = e.to_string();
            }
        }
    }
    Err(GatewayError::Transport {
        status: last_status,
        attempts: retry.max_attempts,
        message: last_error,
    })
}

fn backoff_delay(retry: &RetryPolicy, completed_attempts: u32) -> Duration {
    let factor = 1u64 << completed_attempts.min(16);
    Duration::from_millis(
        retry
            .base_delay_ms
            .saturating_mul(factor)
            .min(retry.max_delay_ms),
    )
}

fn truncate(text: &str, max: usize) -> String {
    if text.len() <= max {
        text.to_string()
    } else {
        let mut end = max;
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &text[..end])
    }
}
