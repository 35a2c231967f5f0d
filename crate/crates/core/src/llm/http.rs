use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, CompletionBackend, SlotKey};
use crate::operators::GenerationRequest;

#[derive(Serialize)]
struct CompletionBody<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
}

/// `POST {prompt, temperature, max_tokens}` and read `{text}` back.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    auth_token_env: Option<String>,
    retries: u32,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| BackendError::Config("missing endpoint_url".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self {
            agent,
            url,
            auth_token_env: cfg.auth_token_env.clone(),
            retries: cfg.retries,
        })
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            }),
        }
    }

    fn attempt(&self, body: &CompletionBody<'_>, token: Option<&str>) -> Result<String, String> {
        let mut req = self.agent.post(&self.url);
        if let Some(t) = token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let reply: CompletionReply = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("bad response body: {e}"))?;
        Ok(reply.text)
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &GenerationRequest, _key: SlotKey) -> Result<String, BackendError> {
        let token = self.token()?;
        let body = CompletionBody {
            prompt: &req.prompt_text,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let mut last_err = String::new();
        for attempt in 0..=self.retries {
            match self.attempt(&body, token.as_deref()) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("completion attempt {} failed: {e}", attempt + 1);
                    last_err = e;
                }
            }
        }
        Err(BackendError::BackendUnavailable(format!(
            "{} after {} attempts: {last_err}",
            self.url,
            self.retries + 1
        )))
    }
}
