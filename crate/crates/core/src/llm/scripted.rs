use std::fs;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendReply, CallError, ChatBackend, ChatRequest, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureError {
    Timeout,
    ServerError,
}

/// One canned reply. Without `match`/`match_regex` it matches any message.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<FixtureError>,
}

impl Fixture {
    pub fn any(response: impl Into<String>) -> Self {
        Fixture {
            response: Some(response.into()),
            ..Fixture::default()
        }
    }

    pub fn matching(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Fixture {
            matches: Some(needle.into()),
            response: Some(response.into()),
            ..Fixture::default()
        }
    }

    pub fn timeout() -> Self {
        Fixture {
            error: Some(FixtureError::Timeout),
            ..Fixture::default()
        }
    }

    pub fn server_error() -> Self {
        Fixture {
            error: Some(FixtureError::ServerError),
            ..Fixture::default()
        }
    }
}

struct Slot {
    fixture: Fixture,
    regex: Option<Regex>,
    used: bool,
}

impl Slot {
    fn accepts(&self, message: &str) -> bool {
        if self.used {
            return false;
        }
        if let Some(n) = &self.fixture.matches {
            if !message.contains(n.as_str()) {
                return false;
            }
        }
        self.regex.as_ref().is_none_or(|r| r.is_match(message))
    }
}

/// Replays fixtures in file order; each fixture answers at most once.
pub struct ScriptedBackend {
    slots: Mutex<Vec<Slot>>,
}

impl ScriptedBackend {
    /// Panics on an invalid `match_regex`; use [`ScriptedBackend::try_new`]
    /// for untrusted input.
    pub fn new(fixtures: Vec<Fixture>) -> Self {
        Self::try_new(fixtures).expect("invalid fixture")
    }

    pub fn try_new(fixtures: Vec<Fixture>) -> Result<Self, LlmError> {
        let slots = fixtures
            .into_iter()
            .enumerate()
            .map(|(i, fixture)| {
                if fixture.response.is_none() == fixture.error.is_none() {
                    return Err(LlmError::Config(format!(
                        "fixture {i}: exactly one of response and error is required"
                    )));
                }
                let regex = fixture
                    .match_regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| LlmError::Config(format!("fixture {i}: {e}")))?;
                Ok(Slot {
                    fixture,
                    regex,
                    used: false,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScriptedBackend {
            slots: Mutex::new(slots),
        })
    }

    /// Loads a JSON array of fixtures.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text =
            fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let fixtures: Vec<Fixture> =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::try_new(fixtures)
    }

    pub fn remaining(&self) -> usize {
        self.slots
            .lock()
            .expect("fixture lock")
            .iter()
            .filter(|s| !s.used)
            .count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, CallError> {
        let message = request.last_user_message();
        let mut slots = self.slots.lock().expect("fixture lock");
        let slot = slots.iter_mut().find(|s| s.accepts(message)).ok_or_else(|| {
            CallError::Fatal(LlmError::NoFixture {
                message: message.to_string(),
            })
        })?;
        slot.used = true;
        match (&slot.fixture.response, slot.fixture.error) {
            (_, Some(FixtureError::Timeout)) => Err(CallError::Retryable("timed out".into())),
            (_, Some(FixtureError::ServerError)) => {
                Err(CallError::Retryable("server error (HTTP 500)".into()))
            }
            (Some(text), None) => Ok(BackendReply {
                text: text.clone(),
                token_usage: None,
            }),
            (None, None) => unreachable!("checked at construction"),
        }
    }

    fn ordered(&self) -> bool {
        true
    }
}
