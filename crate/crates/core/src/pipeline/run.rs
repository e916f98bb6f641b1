//! End-to-end orchestration with checkpointing after every stage.

use std::collections::BTreeMap;

use super::artifacts::{IllustrationPlan, SectionPlan};
use super::fewshot::FewShotBank;
use super::job::{GenerationJob, GenerationRequest, JobStatus, PipelineStore};
use super::prompts::PromptSet;
use super::provider::{ProviderSuite, Stage};
use super::stages::{self, Regenerated, StageContext, StageLog};
use super::{PipelineError, PipelineOptions, StageFailure};
use crate::digest::sha256_hex;
use crate::readability::Lexicon;
use crate::story::{validate_with, SectionId, Story};

/// Checks the profile and request before any provider call.
pub fn check_request(request: &GenerationRequest) -> Result<(), PipelineError> {
    let p = &request.profile;
    let fail = |m: &str| Err(PipelineError::Precondition(m.to_string()));
    if request.target_behavior.trim().is_empty() {
        return fail("target behavior is empty");
    }
    if p.interests.is_empty() || p.persons.is_empty() || p.places.is_empty() {
        return fail("profile needs at least one interest, one person, and one place");
    }
    if request.interests.is_empty() {
        return fail("select at least one interest");
    }
    if let Some(missing) = request.interests.iter().find(|i| !p.interests.iter().any(|e| e.name.eq_ignore_ascii_case(i))) {
        return Err(PipelineError::Precondition(format!("interest {missing:?} is not in the profile")));
    }
    Ok(())
}

/// A configured pipeline: providers, options, prompt templates, lexicon,
/// and few-shot bank.
pub struct Pipeline {
    pub providers: ProviderSuite,
    pub options: PipelineOptions,
    pub prompts: PromptSet,
    pub lexicon: Lexicon,
    pub bank: FewShotBank,
}

impl Pipeline {
    pub fn new(providers: ProviderSuite, options: PipelineOptions) -> Self {
        Self {
            providers,
            options,
            prompts: PromptSet::bundled(),
            lexicon: Lexicon::bundled(),
            bank: FewShotBank::bundled(),
        }
    }

    pub fn with_bank(mut self, bank: FewShotBank) -> Self {
        self.bank = bank;
        self
    }

    pub fn with_lexicon(mut self, lexicon: Lexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn context(&self) -> StageContext<'_> {
        StageContext { providers: &self.providers, options: &self.options, prompts: &self.prompts, lexicon: &self.lexicon }
    }

    pub fn story_id_for(&self, job_id: &str) -> String {
        format!("story-{}", &sha256_hex(format!("{job_id}#{}", self.options.seed))[..16])
    }

    /// Runs or resumes job `job_id`. A stored job continues from its last
    /// checkpoint and `request` is ignored; a complete job is returned
    /// unchanged. Stage failures come back as a failed job, not an error.
    pub async fn run(
        &self,
        store: &dyn PipelineStore,
        job_id: &str,
        request: GenerationRequest,
    ) -> Result<GenerationJob, PipelineError> {
        let mut job = match store.load_job(job_id)? {
            Some(job) => job,
            None => {
                check_request(&request)?;
                GenerationJob::new(job_id, request)
            }
        };
        if matches!(job.status, JobStatus::Complete { .. }) {
            return Ok(job);
        }
        check_request(&job.request)?;
        job.runs += 1;
        job.status = JobStatus::Running;
        let mut log = StageLog {
            run: job.runs,
            records: std::mem::take(&mut job.stage_log),
            warnings: std::mem::take(&mut job.warnings),
        };
        checkpoint(store, &mut job, &log)?;
        match self.advance(store, &mut job, &mut log).await {
            Ok(story_id) => job.status = JobStatus::Complete { story_id },
            Err(Halt::Failed(f)) => {
                tracing::warn!(job = job_id, stage = %f.stage, reason = %f.reason, "job failed");
                job.status = JobStatus::Failed { stage: f.stage, reason: f.reason };
            }
            Err(Halt::Store(e)) => return Err(e),
        }
        checkpoint(store, &mut job, &log)?;
        Ok(job)
    }

    /// Resumes a stored job.
    pub async fn resume(&self, store: &dyn PipelineStore, job_id: &str) -> Result<GenerationJob, PipelineError> {
        let job = store.load_job(job_id)?.ok_or_else(|| PipelineError::NoSuchJob(job_id.to_string()))?;
        let request = job.request.clone();
        self.run(store, job_id, request).await
    }

    async fn advance(
        &self,
        store: &dyn PipelineStore,
        job: &mut GenerationJob,
        log: &mut StageLog,
    ) -> Result<String, Halt> {
        let ctx = self.context();
        let max = self.options.max_attempts;

        let topic = match job.artifacts.topic {
            Some(t) => t,
            None => {
                let t = stages::classify_topic(&ctx, log, &job.request.target_behavior).await?;
                job.artifacts.topic = Some(t);
                checkpoint(store, job, log)?;
                t
            }
        };

        let story_id = self.story_id_for(&job.id);
        let mut feedback = None;
        while !job.artifacts.content_validated {
            if job.artifacts.draft.is_none() {
                let draft =
                    stages::generate_story_draft(&ctx, log, topic, &job.request, &story_id, feedback.take()).await?;
                job.artifacts.draft = Some(draft);
                checkpoint(store, job, log)?;
            }
            let draft = job.artifacts.draft.as_ref().expect("draft present");
            let verdict = stages::validate_content(&ctx, log, draft).await?;
            if verdict.passed() {
                job.artifacts.content_validated = true;
            } else {
                let reason = verdict.reason();
                job.artifacts.draft = None;
                if log.attempts(Stage::ValidateContent, None) >= max || log.attempts(Stage::Generate, None) >= max {
                    checkpoint(store, job, log)?;
                    return Err(StageFailure::new(Stage::ValidateContent, reason).into());
                }
                feedback = Some(reason);
            }
            checkpoint(store, job, log)?;
        }

        if job.artifacts.refined.is_none() {
            let draft = job.artifacts.draft.as_ref().expect("validated draft");
            let refined = stages::refine_text(&ctx, log, draft).await?;
            job.artifacts.refined = Some(refined);
            checkpoint(store, job, log)?;
        }

        if self.options.translate && job.artifacts.translated.is_none() {
            let refined = job.artifacts.refined.as_ref().expect("refined");
            let t = stages::translate_story(&ctx, log, refined, &self.bank).await?;
            job.artifacts.translated = Some(t.story);
            checkpoint(store, job, log)?;
        }

        let text_story = job.artifacts.translated.clone().or_else(|| job.artifacts.refined.clone()).expect("refined");

        if job.artifacts.scenes.is_none() || job.artifacts.roster.is_none() {
            let (scenes, roster) = stages::generate_scene_descriptions(&ctx, log, &text_story, None).await?;
            job.artifacts.scenes = Some(scenes);
            job.artifacts.roster = Some(roster);
            checkpoint(store, job, log)?;
        }
        let scenes = job.artifacts.scenes.clone().expect("scenes");
        let roster = job.artifacts.roster.clone().expect("roster");

        if job.artifacts.assignments.is_none() {
            let a = stages::match_entities(&ctx, log, &text_story, &scenes, &roster).await?;
            job.artifacts.assignments = Some(a);
            checkpoint(store, job, log)?;
        }
        if job.artifacts.entity_descriptions.is_none() {
            let d = stages::describe_entities(&ctx, log, &text_story, &roster).await?;
            job.artifacts.entity_descriptions = Some(d);
            checkpoint(store, job, log)?;
        }

        let assignments = job.artifacts.assignments.clone().expect("assignments");
        let plan = IllustrationPlan {
            roster,
            sections: scenes
                .into_iter()
                .map(|scene| {
                    let assignment = assignments
                        .iter()
                        .find(|a| a.section_id == scene.section_id)
                        .cloned()
                        .unwrap_or_else(|| super::EntityAssignment { section_id: scene.section_id.clone(), ..Default::default() });
                    let text_digest =
                        text_story.graph.section(&scene.section_id).map(|s| s.text_digest()).unwrap_or_default();
                    SectionPlan { section_id: scene.section_id.clone(), text_digest, stale: false, scene, assignment }
                })
                .collect(),
            entities: job.artifacts.entity_descriptions.clone().expect("descriptions"),
        };

        if job.artifacts.illustrations.is_none() {
            let images = stages::generate_illustrations(&ctx, log, &plan).await;
            job.artifacts.illustrations = Some(images);
            checkpoint(store, job, log)?;
        }

        let story = finish(text_story, plan, job.artifacts.illustrations.as_ref().expect("images"));
        let report = validate_with(&story, &self.options.validation);
        if !report.is_valid() {
            return Err(StageFailure::new(Stage::Illustrate, format!("final story invalid: {:?}", report.rules())).into());
        }
        store.save_story(&story).map_err(|e| Halt::Store(e.into()))?;
        Ok(story.id)
    }

    /// Re-images one section of a finished story.
    pub async fn regenerate_image(
        &self,
        story: &Story,
        section: &SectionId,
    ) -> Result<(Regenerated, StageLog), PipelineError> {
        let ctx = self.context();
        let mut log = StageLog::new();
        let out = stages::regenerate_illustration(&ctx, &mut log, story, section).await?;
        Ok((out, log))
    }
}

fn finish(mut story: Story, plan: IllustrationPlan, images: &BTreeMap<SectionId, crate::digest::ImageRef>) -> Story {
    for s in &mut story.graph.sections {
        s.illustration = images.get(&s.id).cloned();
    }
    story.preprocessing = Some(plan);
    story
}

enum Halt {
    Failed(StageFailure),
    Store(PipelineError),
}

impl From<StageFailure> for Halt {
    fn from(f: StageFailure) -> Self {
        Halt::Failed(f)
    }
}

impl From<PipelineError> for Halt {
    fn from(e: PipelineError) -> Self {
        Halt::Store(e)
    }
}

fn checkpoint(store: &dyn PipelineStore, job: &mut GenerationJob, log: &StageLog) -> Result<(), PipelineError> {
    job.stage_log = log.records.clone();
    job.warnings = log.warnings.clone();
    store.save_job(job)?;
    Ok(())
}
