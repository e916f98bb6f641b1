//! Pipeline stages. Each stage records every provider attempt in the
//! [`StageLog`] and returns either its artifact or a [`StageFailure`].

mod illustration;
mod text;

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::job::{StageRecord, Verdict};
use super::prompts::{PromptSet, Template};
use super::provider::{ProviderError, ProviderSuite, Stage, TextRequest};
use super::{PipelineOptions, StageFailure};
use crate::readability::Lexicon;

pub use illustration::{
    apply_continuity, continuity_violations, describe_entities, generate_illustration, generate_illustrations,
    generate_scene_descriptions, illustration_request, match_entities, regenerate_illustration, scene_places,
    Regenerated,
};
pub(crate) use text::mentions as text_mentions;
pub use text::{classify_topic, generate_story_draft, refine_text, translate_story, validate_content, ContentVerdict, Translation};

/// Shared inputs for every stage.
#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub providers: &'a ProviderSuite,
    pub options: &'a PipelineOptions,
    pub prompts: &'a PromptSet,
    pub lexicon: &'a Lexicon,
}

#[derive(Debug, Clone, Default)]
pub struct StageLog {
    pub run: u32,
    pub records: Vec<StageRecord>,
    pub warnings: Vec<String>,
}

impl StageLog {
    pub fn new() -> Self {
        Self { run: 1, ..Default::default() }
    }

    pub fn attempts(&self, stage: Stage, subject: Option<&str>) -> u32 {
        self.records
            .iter()
            .filter(|r| r.run == self.run && r.stage == stage && r.subject.as_deref() == subject)
            .map(|r| r.attempt)
            .max()
            .unwrap_or(0)
    }

    pub fn record(
        &mut self,
        stage: Stage,
        subject: Option<&str>,
        attempt: u32,
        input_digest: String,
        output: Value,
        verdict: Verdict,
    ) {
        self.records.push(StageRecord {
            run: self.run,
            stage,
            subject: subject.map(str::to_string),
            attempt,
            input_digest,
            output,
            verdict,
        });
    }

    pub fn warn(&mut self, warning: impl Into<String>) {
        self.warnings.push(warning.into());
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.records.iter().filter(|r| r.stage == stage).count()
    }
}

pub(crate) enum Outcome<T> {
    Valid(T),
    /// The provider kept answering, but never acceptably.
    Invalid(String),
}

/// Parameters of one structured provider exchange.
pub(crate) struct Exchange<'t> {
    pub stage: Stage,
    pub subject: Option<String>,
    pub template: &'t Template,
    pub slots: BTreeMap<&'static str, String>,
    pub payload: Value,
    /// Unacceptable answers tolerated before giving up.
    pub max_invalid: u32,
    /// Feedback carried in from an earlier rejection, e.g. by the content
    /// validator.
    pub feedback: Option<String>,
}

/// Strips one surrounding Markdown code fence, if present.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Sends the exchange, reprompting with feedback after unparseable or
/// rejected answers and retrying transport failures, all within the stage's
/// attempt budget.
pub(crate) async fn exchange<T, U>(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    ex: Exchange<'_>,
    convert: impl Fn(T) -> Result<U, String>,
) -> Result<Outcome<U>, StageFailure>
where
    T: DeserializeOwned,
{
    let subject = ex.subject.as_deref();
    let mut invalid = 0;
    let mut feedback = ex.feedback.clone().unwrap_or_default();
    let mut last_reason = String::from("attempts-exhausted");
    loop {
        let attempt = log.attempts(ex.stage, subject) + 1;
        if attempt > ctx.options.max_attempts {
            return if last_reason.starts_with("provider-unreachable") {
                Err(StageFailure::new(ex.stage, "provider-unreachable"))
            } else {
                Ok(Outcome::Invalid(last_reason))
            };
        }
        let mut slots = ex.slots.clone();
        slots.insert(
            "feedback",
            if feedback.is_empty() { String::new() } else { format!("Your previous answer was rejected: {feedback}") },
        );
        let prompt = ex.template.render(&slots).map_err(|e| StageFailure::new(ex.stage, e.to_string()))?;
        let mut payload = ex.payload.clone();
        if let Value::Object(map) = &mut payload {
            map.insert("attempt".into(), json!(attempt));
            map.insert("feedback".into(), json!(feedback));
        }
        let request = TextRequest { stage: ex.stage, template: ex.template.id(), prompt, payload };
        let digest = request.digest();

        let raw = match ctx.providers.text.complete(&request).await {
            Ok(raw) => raw,
            Err(e) => {
                last_reason = match &e {
                    ProviderError::Unreachable(_) => "provider-unreachable".to_string(),
                    other => other.to_string(),
                };
                log.record(ex.stage, subject, attempt, digest, Value::Null, Verdict::Rejected(e.to_string()));
                continue;
            }
        };

        let parsed: Result<(Value, T), String> = serde_json::from_str::<Value>(unfence(&raw))
            .map_err(|e| format!("unparseable: {e}"))
            .and_then(|v| {
                serde_json::from_value::<T>(v.clone()).map(|t| (v, t)).map_err(|e| format!("schema: {e}"))
            });
        let result = parsed.and_then(|(v, t)| convert(t).map(|u| (v, u)));
        match result {
            Ok((value, out)) => {
                log.record(ex.stage, subject, attempt, digest, value, Verdict::Accepted);
                return Ok(Outcome::Valid(out));
            }
            Err(reason) => {
                let output = serde_json::from_str::<Value>(unfence(&raw)).unwrap_or(Value::String(raw.clone()));
                log.record(ex.stage, subject, attempt, digest, output, Verdict::Rejected(reason.clone()));
                invalid += 1;
                feedback = reason.clone();
                last_reason = reason;
                if invalid >= ex.max_invalid {
                    return Ok(Outcome::Invalid(last_reason));
                }
            }
        }
    }
}
