use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{check_word_request, select_words, ScoreError, Scorer, WordLogProb, WordScore};

/// JSON bodies of the scoring-service protocol.
pub mod wire {
    use serde::{Deserialize, Serialize};

    /// `POST /v1/score-word`
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreWordRequest {
        pub template: String,
        pub word: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreWordResponse {
        pub mean_log_prob: f64,
        pub token_count: u32,
    }

    /// `POST /v1/pll`
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct PllRequest {
        pub sentence: String,
        pub scored_word_indices: Vec<usize>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct PllResponse {
        pub word_log_probs: Vec<f64>,
        pub token_counts: Vec<u32>,
    }

    /// `GET /v1/info`
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ServiceInfo {
        pub model_id: String,
        pub vocab_size: u64,
        pub max_sequence_length: u64,
    }
}

use wire::{PllRequest, PllResponse, ScoreWordRequest, ScoreWordResponse, ServiceInfo};

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(n: usize) -> Self {
        InFlight {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Client for a scoring service. Tokenization happens on the service side.
pub struct RemoteScorer {
    base: String,
    agent: ureq::Agent,
    limit: InFlight,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, max_in_flight: usize) -> Result<Self, String> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(format!("endpoint must be an http(s) URL, got `{endpoint}`"));
        }
        if max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Ok(RemoteScorer {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
            limit: InFlight::new(max_in_flight),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn fail(&self, url: &str, payload: &str, message: impl Into<String>) -> ScoreError {
        ScoreError::Remote {
            endpoint: url.to_string(),
            message: message.into(),
            payload: payload.to_string(),
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        req: &Req,
    ) -> Result<Resp, ScoreError> {
        let url = self.url(path);
        let payload = serde_json::to_string(req).expect("request serializes");
        let _permit = self.limit.acquire();
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(payload.as_bytes())
            .map_err(|e| self.fail(&url, &payload, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(self.fail(&url, &payload, format!("HTTP {status}: {}", body.trim())));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| self.fail(&url, &payload, format!("bad response body: {e}")))
    }

    pub fn info(&self) -> Result<ServiceInfo, ScoreError> {
        let url = self.url("/v1/info");
        let _permit = self.limit.acquire();
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| self.fail(&url, "", e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(self.fail(&url, "", format!("HTTP {status}: {}", body.trim())));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| self.fail(&url, "", format!("bad response body: {e}")))
    }
}

impl Scorer for RemoteScorer {
    fn score_word(&self, template: &str, word: &str) -> Result<WordScore, ScoreError> {
        check_word_request(template, word)?;
        let req = ScoreWordRequest {
            template: template.into(),
            word: word.into(),
        };
        let resp: ScoreWordResponse = self.post("/v1/score-word", &req)?;
        if resp.token_count == 0 || !resp.mean_log_prob.is_finite() {
            return Err(self.fail(
                &self.url("/v1/score-word"),
                &serde_json::to_string(&req).unwrap_or_default(),
                format!("invalid response {resp:?}"),
            ));
        }
        Ok(WordScore {
            mean_log_prob: resp.mean_log_prob,
            token_count: resp.token_count,
        })
    }

    fn score_sentence_words(
        &self,
        sentence: &str,
        word_indices: &[usize],
    ) -> Result<Vec<WordLogProb>, ScoreError> {
        select_words(sentence, word_indices)?;
        let req = PllRequest {
            sentence: sentence.into(),
            scored_word_indices: word_indices.to_vec(),
        };
        let resp: PllResponse = self.post("/v1/pll", &req)?;
        let well_formed = resp.word_log_probs.len() == word_indices.len()
            && resp.token_counts.len() == word_indices.len()
            && resp.token_counts.iter().all(|&c| c >= 1)
            && resp.word_log_probs.iter().all(|v| v.is_finite());
        if !well_formed {
            return Err(self.fail(
                &self.url("/v1/pll"),
                &serde_json::to_string(&req).unwrap_or_default(),
                format!("invalid response {resp:?}"),
            ));
        }
        Ok(resp
            .word_log_probs
            .into_iter()
            .zip(resp.token_counts)
            .map(|(sum_log_prob, token_count)| WordLogProb {
                sum_log_prob,
                token_count,
            })
            .collect())
    }
}
