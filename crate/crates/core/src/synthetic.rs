//! Synthetic skill world: generates briefs and profiles with a controllable
//! ground-truth fit, scores them with the rubric-calibrated oracle that
//! stands in for the LLM teacher, and assembles train/test datasets with the
//! augmentation heuristics (average-match and unsuitable candidates).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::mix;
use crate::dataset::InteractionRecord;
use crate::document::{build_document, default_vocab, DocKind, Document, SectionVocab};
use crate::error::{Error, Result};
use crate::rubric::{nearest_level_index, LEVELS};
use crate::SCHEMA_VERSION;

const WORLD_TAG: u64 = 0x717e_57ed;
const PROJECT_TAG: u64 = 0x7065_7221;
const PROFILE_TAG: u64 = 0x7065_7222;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub category: usize,
}

/// A closed world of categories, skills and pairwise skill relatedness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillWorld {
    pub schema_version: u32,
    pub seed: u64,
    pub categories: Vec<String>,
    pub skills: Vec<Skill>,
    /// Row-major symmetric relatedness matrix, diagonal 1.
    relatedness: Vec<f64>,
}

impl SkillWorld {
    pub fn relatedness(&self, a: usize, b: usize) -> f64 {
        self.relatedness[a * self.skills.len() + b]
    }

    pub fn skill_index(&self, name: &str) -> Option<usize> {
        self.skills.iter().position(|s| s.name == name)
    }

    pub fn skills_of_category(&self, category: usize) -> Vec<usize> {
        (0..self.skills.len()).filter(|&i| self.skills[i].category == category).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SkillWorld> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

const SYLLABLES: [&str; 20] = [
    "zor", "vel", "mak", "tun", "bri", "qua", "len", "dor", "fex", "gal", "hib", "jun", "kol",
    "mir", "nev", "pax", "rud", "sel", "tor", "wix",
];

fn pseudo_word(rng: &mut ChaCha8Rng, parts: usize) -> String {
    (0..parts).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

/// Generate a deterministic world: within-category relatedness in [0.4, 0.9],
/// cross-category in [0, 0.2], symmetric, self-relatedness 1.
pub fn gen_world(n_categories: usize, skills_per_category: usize, seed: u64) -> SkillWorld {
    assert!(n_categories >= 1 && skills_per_category >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, WORLD_TAG));
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut unique = |rng: &mut ChaCha8Rng, parts: usize| -> String {
        loop {
            let w = pseudo_word(rng, parts);
            if used.insert(w.clone()) {
                return w;
            }
        }
    };
    let categories: Vec<String> = (0..n_categories).map(|_| unique(&mut rng, 2)).collect();
    let mut skills = Vec::with_capacity(n_categories * skills_per_category);
    for c in 0..n_categories {
        for _ in 0..skills_per_category {
            skills.push(Skill { name: unique(&mut rng, 3), category: c });
        }
    }
    let n = skills.len();
    let mut relatedness = vec![0.0f64; n * n];
    for i in 0..n {
        relatedness[i * n + i] = 1.0;
        for j in i + 1..n {
            let r = if skills[i].category == skills[j].category {
                rng.gen_range(0.4..0.9)
            } else {
                rng.gen_range(0.0..0.2)
            };
            relatedness[i * n + j] = r;
            relatedness[j * n + i] = r;
        }
    }
    SkillWorld { schema_version: SCHEMA_VERSION, seed, categories, skills, relatedness }
}

const LANGUAGES: [(&str, f64); 4] = [("fr", 0.5), ("en", 0.25), ("de", 0.15), ("es", 0.1)];

fn pick_language(rng: &mut ChaCha8Rng) -> &'static str {
    let roll: f64 = rng.gen();
    let mut acc = 0.0;
    for (lang, w) in LANGUAGES {
        acc += w;
        if roll < acc {
            return lang;
        }
    }
    LANGUAGES[LANGUAGES.len() - 1].0
}

fn skill_names(world: &SkillWorld, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| world.skills[i].name.clone()).collect()
}

/// Generate a project brief requiring 2–5 skills, mostly from a primary
/// category with an optional secondary one (mixed requirements keep every
/// rubric level reachable for candidate construction).
pub fn gen_project(world: &SkillWorld, id: &str, rng: &mut ChaCha8Rng) -> Document {
    let category = rng.gen_range(0..world.categories.len());
    let mut pool = world.skills_of_category(category);
    pool.shuffle(rng);
    let n_primary = rng.gen_range(2..=3.min(pool.len()));
    let mut required: Vec<usize> = pool.into_iter().take(n_primary).collect();
    if world.categories.len() > 1 && rng.gen_bool(0.6) {
        let other = (category + rng.gen_range(1..world.categories.len())) % world.categories.len();
        let mut other_pool = world.skills_of_category(other);
        other_pool.shuffle(rng);
        required.extend(other_pool.into_iter().take(rng.gen_range(1..=2)));
    }
    build_project_doc(world, id, category, &required, rng)
}

fn build_project_doc(
    world: &SkillWorld,
    id: &str,
    category: usize,
    required: &[usize],
    rng: &mut ChaCha8Rng,
) -> Document {
    let names = skill_names(world, required);
    let title = format!("Need {} expertise for an upcoming project", names[0]);
    let sentence_templates = [
        "We are building a deliverable centered on {}.",
        "Hands-on depth in {} is essential.",
        "The engagement expects production quality {} work.",
        "Our roadmap depends on solid {} foundations.",
    ];
    let n_sentences = rng.gen_range(2..=3);
    let description: String = (0..n_sentences)
        .map(|i| {
            sentence_templates[i % sentence_templates.len()]
                .replace("{}", &names[i % names.len()])
        })
        .collect::<Vec<_>>()
        .join(" ");
    let mut metadata = BTreeMap::new();
    metadata.insert("category".to_string(), world.categories[category].clone());
    metadata.insert("language".to_string(), pick_language(rng).to_string());
    let sections = vec![
        ("title".to_string(), title),
        ("description".to_string(), description),
        ("skills".to_string(), names.join(", ")),
        ("category".to_string(), world.categories[category].clone()),
    ];
    let vocab = default_vocab(DocKind::Brief);
    build_document(id, DocKind::Brief, &sections, metadata, &vocab)
        .expect("generated briefs always have utterances")
}

/// Generate a freelancer profile with 3–6 skills drawn from 1–2 categories.
pub fn gen_profile(world: &SkillWorld, id: &str, rng: &mut ChaCha8Rng) -> Document {
    let primary = rng.gen_range(0..world.categories.len());
    let mut pool = world.skills_of_category(primary);
    pool.shuffle(rng);
    let n_primary = rng.gen_range(2..=4.min(pool.len()));
    let mut skills: Vec<usize> = pool.into_iter().take(n_primary).collect();
    if rng.gen_bool(0.4) && world.categories.len() > 1 {
        let other = (primary + rng.gen_range(1..world.categories.len())) % world.categories.len();
        let mut other_pool = world.skills_of_category(other);
        other_pool.shuffle(rng);
        skills.extend(other_pool.into_iter().take(rng.gen_range(1..=2)));
    }
    build_profile_doc(world, id, &skills, rng)
}

fn build_profile_doc(
    world: &SkillWorld,
    id: &str,
    skills: &[usize],
    rng: &mut ChaCha8Rng,
) -> Document {
    let names = skill_names(world, skills);
    let title = format!("{} specialist with delivery experience", names[0]);
    let sentence_templates = [
        "Shipped multiple engagements built on {}.",
        "Deep hands-on background in {}.",
        "Comfortable owning {} projects end to end.",
        "Years of practice applying {} in production.",
    ];
    let n_sentences = rng.gen_range(2..=3);
    let experience: String = (0..n_sentences)
        .map(|i| {
            sentence_templates[i % sentence_templates.len()]
                .replace("{}", &names[i % names.len()])
        })
        .collect::<Vec<_>>()
        .join(" ");
    let categories: BTreeSet<String> = skills
        .iter()
        .map(|&s| world.categories[world.skills[s].category].clone())
        .collect();
    let categories: Vec<String> = categories.into_iter().collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("categories".to_string(), categories.join(","));
    metadata.insert("group".to_string(), if rng.gen_bool(0.5) { "A" } else { "B" }.to_string());
    let sections = vec![
        ("title".to_string(), title),
        ("experience".to_string(), experience),
        ("skills".to_string(), names.join(", ")),
        ("category".to_string(), categories.join(", ")),
    ];
    let vocab = default_vocab(DocKind::Profile);
    build_document(id, DocKind::Profile, &sections, metadata, &vocab)
        .expect("generated profiles always have utterances")
}

fn doc_skill_indices(world: &SkillWorld, doc: &Document, vocab: &SectionVocab) -> Result<Vec<usize>> {
    let skills_section = vocab.lookup("skills").expect("default vocab has skills");
    let mut out = Vec::new();
    for u in &doc.utterances {
        if u.section == skills_section.id {
            let idx = world
                .skill_index(&u.text)
                .ok_or_else(|| Error::ForeignSkill(u.text.clone()))?;
            out.push(idx);
        }
    }
    Ok(out)
}

/// Ground-truth skill fit: for every required skill take the best relatedness
/// to any profile skill, averaged over the requirements.
pub fn true_fit(project: &Document, profile: &Document, world: &SkillWorld) -> Result<f64> {
    let brief_vocab = default_vocab(DocKind::Brief);
    let profile_vocab = default_vocab(DocKind::Profile);
    let required = doc_skill_indices(world, project, &brief_vocab)?;
    let offered = doc_skill_indices(world, profile, &profile_vocab)?;
    Ok(fit_from_indices(world, &required, &offered))
}

fn fit_from_indices(world: &SkillWorld, required: &[usize], offered: &[usize]) -> f64 {
    if required.is_empty() || offered.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &r in required {
        let best = offered
            .iter()
            .map(|&s| world.relatedness(r, s))
            .fold(0.0f64, f64::max);
        acc += best;
    }
    acc / required.len() as f64
}

/// Bucket a fit value to the nearest rubric level (ties round down).
pub fn rubric_score(fit: f64) -> f64 {
    LEVELS[nearest_level_index(fit)]
}

/// Rubric score with adjacent-level noise applied with probability `prob`.
pub fn rubric_score_noisy(fit: f64, rng: &mut ChaCha8Rng, prob: f64) -> f64 {
    let idx = nearest_level_index(fit);
    if prob > 0.0 && rng.gen_bool(prob.clamp(0.0, 1.0)) {
        let up = rng.gen_bool(0.5);
        let flipped = match (idx, up) {
            (0, _) => 1,
            (5, _) => 4,
            (i, true) => i + 1,
            (i, false) => i - 1,
        };
        return LEVELS[flipped];
    }
    LEVELS[idx]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_train_projects: usize,
    pub n_test_projects: usize,
    pub categories: usize,
    pub skills_per_category: usize,
    pub seed: u64,
    /// Probability that a stored teacher score flips to an adjacent level.
    pub noise_prob: f64,
    /// Extra average-match (level 0.4/0.6) candidates added to train projects.
    pub avg_extra_per_project: usize,
    /// Out-of-distribution rows appended to test projects.
    pub ood_average_per_test_project: usize,
    pub ood_unsuitable_per_test_project: usize,
    pub max_tries: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_train_projects: 200,
            n_test_projects: 50,
            categories: 8,
            skills_per_category: 12,
            seed: 0,
            noise_prob: 0.05,
            avg_extra_per_project: 1,
            ood_average_per_test_project: 1,
            ood_unsuitable_per_test_project: 2,
            max_tries: 500,
        }
    }
}

#[derive(Debug)]
pub struct GeneratedDataset {
    pub documents: Vec<Document>,
    pub train: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
}

/// Construct a profile whose rubric level against `required` equals
/// `LEVELS[level_idx]`. Each attempt assembles a candidate skill set from a
/// level-specific recipe, then verifies the exact fit bucket.
pub fn gen_profile_for_level(
    world: &SkillWorld,
    required: &[usize],
    level_idx: usize,
    id: &str,
    rng: &mut ChaCha8Rng,
    max_tries: usize,
) -> Result<Document> {
    let target = LEVELS[level_idx];
    let n_req = required.len();
    let n_skills = world.skills.len();
    let foreign: Vec<usize> = (0..n_skills).filter(|s| !required.contains(s)).collect();
    let req_categories: BTreeSet<usize> =
        required.iter().map(|&r| world.skills[r].category).collect();
    let near_category: Vec<usize> = foreign
        .iter()
        .copied()
        .filter(|&s| req_categories.contains(&world.skills[s].category))
        .collect();
    let far_category: Vec<usize> = foreign
        .iter()
        .copied()
        .filter(|&s| !req_categories.contains(&world.skills[s].category))
        .collect();

    let pick = |pool: &[usize], n: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut v = pool.to_vec();
        v.shuffle(rng);
        v.truncate(n.min(v.len()));
        v
    };

    for _ in 0..max_tries {
        let mut skills: Vec<usize> = match level_idx {
            5 => {
                // full coverage plus related extras
                let mut s = required.to_vec();
                s.extend(pick(&near_category, rng.gen_range(0..=2), rng));
                s
            }
            0 => {
                // only skills weakly related to every requirement; the exact
                // fit check below decides the bucket
                let qualifying: Vec<usize> = far_category
                    .iter()
                    .copied()
                    .filter(|&s| required.iter().all(|&r| world.relatedness(r, s) <= 0.12))
                    .collect();
                if qualifying.len() < 2 {
                    continue;
                }
                pick(&qualifying, rng.gen_range(2..=3), rng)
            }
            1 => {
                // unrelated categories only: best relatedness stays small
                pick(&far_category, rng.gen_range(2..=5), rng)
            }
            _ => {
                // copy some requirements, pad with related and unrelated
                // skills, and let the exact-fit check select the bucket
                let ideal = target * n_req as f64;
                let lo = (ideal.floor() as usize).saturating_sub(1);
                let hi = (ideal.ceil() as usize).min(n_req - 1);
                let k = rng.gen_range(lo..=hi.max(lo));
                let copied = pick(required, k, rng);
                let mut s = copied;
                s.extend(pick(&near_category, rng.gen_range(0..=2), rng));
                s.extend(pick(&far_category, rng.gen_range(0..=2), rng));
                s.sort_unstable();
                s.dedup();
                if s.len() < 2 {
                    continue;
                }
                s
            }
        };
        skills.sort_unstable();
        skills.dedup();
        if skills.is_empty() {
            continue;
        }
        let fit = fit_from_indices(world, required, &skills);
        if nearest_level_index(fit) == level_idx {
            return Ok(build_profile_doc(world, id, &skills, rng));
        }
    }
    Err(Error::ExhaustedSampler { level: target, tries: max_tries })
}

/// Build disjoint train/test corpora. Each project gets one candidate per
/// reachable rubric level; train projects add average-match extras, test
/// projects add tagged out-of-distribution rows.
pub fn build_dataset(world: &SkillWorld, config: &DatasetConfig) -> Result<GeneratedDataset> {
    let mut documents = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let brief_vocab = default_vocab(DocKind::Brief);

    for split in ["tr", "te"] {
        let n_projects =
            if split == "tr" { config.n_train_projects } else { config.n_test_projects };
        for p in 0..n_projects {
            // per-project stream keyed by (seed, split, index): generation
            // order does not matter
            let split_tag = if split == "tr" { PROJECT_TAG } else { PROFILE_TAG };
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix(config.seed, mix(split_tag, p as u64)));
            let project_id = format!("p-{split}-{p:05}");
            let project = gen_project(world, &project_id, &mut rng);
            let required = doc_skill_indices(world, &project, &brief_vocab)?;
            let language = project.metadata.get("language").cloned().unwrap_or_default();

            let mut records = Vec::new();
            let mut profiles = Vec::new();
            for level_idx in 0..LEVELS.len() {
                let profile_id = format!("f-{split}-{p:05}-l{level_idx}");
                // a level can be unreachable for some requirement mixes;
                // skipped levels are simply absent from this project
                let profile = match gen_profile_for_level(
                    world,
                    &required,
                    level_idx,
                    &profile_id,
                    &mut rng,
                    config.max_tries,
                ) {
                    Ok(p) => p,
                    Err(Error::ExhaustedSampler { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let fit = true_fit(&project, &profile, world)?;
                let teacher = rubric_score_noisy(fit, &mut rng, config.noise_prob);
                records.push(make_record(&project_id, &profile, teacher, &language, None));
                profiles.push(profile);
            }

            let is_train = split == "tr";
            let avg_levels = [2usize, 3usize]; // rubric levels 0.4 and 0.6
            let extras = if is_train {
                config.avg_extra_per_project
            } else {
                config.ood_average_per_test_project
            };
            for e in 0..extras {
                let level_idx = avg_levels[rng.gen_range(0..avg_levels.len())];
                let profile_id = format!("f-{split}-{p:05}-avg{e}");
                let profile = match gen_profile_for_level(
                    world,
                    &required,
                    level_idx,
                    &profile_id,
                    &mut rng,
                    config.max_tries,
                ) {
                    Ok(p) => p,
                    Err(Error::ExhaustedSampler { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let fit = true_fit(&project, &profile, world)?;
                let teacher = rubric_score_noisy(fit, &mut rng, config.noise_prob);
                let ood = if is_train { None } else { Some("average") };
                records.push(make_record(&project_id, &profile, teacher, &language, ood));
                profiles.push(profile);
            }
            if !is_train {
                for e in 0..config.ood_unsuitable_per_test_project {
                    let profile_id = format!("f-{split}-{p:05}-uns{e}");
                    let profile = match gen_profile_for_level(
                        world,
                        &required,
                        0,
                        &profile_id,
                        &mut rng,
                        config.max_tries,
                    ) {
                        Ok(p) => p,
                        Err(Error::ExhaustedSampler { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    records.push(make_record(
                        &project_id,
                        &profile,
                        0.0,
                        &language,
                        Some("unsuitable"),
                    ));
                    profiles.push(profile);
                }
            }

            documents.push(project);
            documents.extend(profiles);
            if is_train {
                train.extend(records);
            } else {
                test.extend(records);
            }
        }
    }
    Ok(GeneratedDataset { documents, train, test })
}

fn make_record(
    project_id: &str,
    profile: &Document,
    teacher: f64,
    language: &str,
    ood: Option<&str>,
) -> InteractionRecord {
    let mut metadata = BTreeMap::new();
    metadata.insert("language".to_string(), language.to_string());
    if let Some(group) = profile.metadata.get("group") {
        metadata.insert("group".to_string(), group.clone());
    }
    if let Some(tag) = ood {
        metadata.insert(crate::metrics::OOD_KEY.to_string(), tag.to_string());
    }
    InteractionRecord {
        project_id: project_id.to_string(),
        profile_id: profile.id.clone(),
        teacher_score: teacher,
        label: Some(u8::from(teacher > 0.5)),
        metadata,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SkillWorld {
        gen_world(6, 10, 42)
    }

    #[test]
    fn world_generation_is_deterministic() {
        let a = gen_world(4, 5, 7);
        let b = gen_world(4, 5, 7);
        assert_eq!(a.categories, b.categories);
        assert_eq!(a.skills, b.skills);
        assert_eq!(a.relatedness, b.relatedness);
    }

    #[test]
    fn relatedness_is_symmetric_with_unit_diagonal() {
        let w = world();
        let n = w.skills.len();
        for i in 0..n {
            assert_eq!(w.relatedness(i, i), 1.0);
            for j in 0..n {
                assert_eq!(w.relatedness(i, j), w.relatedness(j, i));
                let r = w.relatedness(i, j);
                if i != j {
                    if w.skills[i].category == w.skills[j].category {
                        assert!((0.4..0.9).contains(&r));
                    } else {
                        assert!((0.0..0.2).contains(&r));
                    }
                }
            }
        }
    }

    #[test]
    fn generated_docs_have_at_least_three_utterances() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..20 {
            let p = gen_project(&w, &format!("p{i}"), &mut rng);
            assert!(p.utterances.len() >= 3, "project {i}");
            let f = gen_profile(&w, &format!("f{i}"), &mut rng);
            assert!(f.utterances.len() >= 3, "profile {i}");
        }
    }

    #[test]
    fn skill_tags_are_world_skills() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vocab = default_vocab(DocKind::Profile);
        let skills_id = vocab.lookup("skills").unwrap().id;
        let f = gen_profile(&w, "f", &mut rng);
        for u in f.utterances.iter().filter(|u| u.section == skills_id) {
            assert!(w.skill_index(&u.text).is_some(), "unknown skill {:?}", u.text);
        }
    }

    #[test]
    fn generation_is_reproducible_from_rng_state() {
        let w = world();
        let a = gen_project(&w, "p", &mut ChaCha8Rng::seed_from_u64(5));
        let b = gen_project(&w, "p", &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn full_coverage_profile_has_unit_fit() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let project = gen_project(&w, "p", &mut rng);
        let brief_vocab = default_vocab(DocKind::Brief);
        let required = doc_skill_indices(&w, &project, &brief_vocab).unwrap();
        let profile = build_profile_doc(&w, "f", &required, &mut rng);
        assert_eq!(true_fit(&project, &profile, &w).unwrap(), 1.0);
    }

    #[test]
    fn foreign_skill_is_rejected() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let project = gen_project(&w, "p", &mut rng);
        let vocab = default_vocab(DocKind::Profile);
        let profile = build_document(
            "f",
            DocKind::Profile,
            &[
                ("title".to_string(), "someone".to_string()),
                ("skills".to_string(), "notaskill".to_string()),
            ],
            BTreeMap::new(),
            &vocab,
        )
        .unwrap();
        assert!(matches!(true_fit(&project, &profile, &w), Err(Error::ForeignSkill(_))));
    }

    #[test]
    fn partial_coverage_hand_value() {
        // required {a, b}, profile {a}; best relatedness for b is rel(a,b)
        let w = world();
        let (a, b) = (0usize, 1usize);
        assert_eq!(w.skills[a].category, w.skills[b].category);
        let fit = fit_from_indices(&w, &[a, b], &[a]);
        let expect = (1.0 + w.relatedness(a, b)) / 2.0;
        assert!((fit - expect).abs() < 1e-12);
    }

    #[test]
    fn rubric_examples() {
        assert_eq!(rubric_score(0.93), 1.0);
        assert_eq!(rubric_score(0.5), 0.4);
        assert_eq!(rubric_score(0.0), 0.0);
    }

    #[test]
    fn noisy_rubric_flips_to_adjacent_levels_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut flips = 0;
        for _ in 0..2000 {
            let base = rubric_score(0.61);
            let noisy = rubric_score_noisy(0.61, &mut rng, 0.3);
            if noisy != base {
                flips += 1;
                assert!((noisy - base).abs() < 0.21);
            }
        }
        assert!(flips > 300, "noise never fired: {flips}");
    }

    #[test]
    fn level_targeting_hits_every_level() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let project = gen_project(&w, "p", &mut rng);
        let brief_vocab = default_vocab(DocKind::Brief);
        let required = doc_skill_indices(&w, &project, &brief_vocab).unwrap();
        for level_idx in 0..LEVELS.len() {
            let profile = gen_profile_for_level(&w, &required, level_idx, "f", &mut rng, 500)
                .unwrap_or_else(|e| panic!("level {level_idx}: {e}"));
            let fit = true_fit(&project, &profile, &w).unwrap();
            assert_eq!(
                nearest_level_index(fit),
                level_idx,
                "fit {fit} for target {level_idx}"
            );
        }
    }

    #[test]
    fn dataset_splits_are_disjoint_and_levels_valid() {
        let w = world();
        let config = DatasetConfig {
            n_train_projects: 12,
            n_test_projects: 5,
            noise_prob: 0.0,
            ..Default::default()
        };
        let ds = build_dataset(&w, &config).unwrap();
        let train_projects: BTreeSet<&String> =
            ds.train.iter().map(|r| &r.project_id).collect();
        let test_projects: BTreeSet<&String> = ds.test.iter().map(|r| &r.project_id).collect();
        assert!(train_projects.is_disjoint(&test_projects));
        for rec in ds.train.iter().chain(&ds.test) {
            assert!(LEVELS.contains(&rec.teacher_score), "score {}", rec.teacher_score);
            assert!(rec.metadata.contains_key("language"));
            assert!(rec.metadata.contains_key("group"));
        }
        // every interaction references a generated document
        let doc_ids: BTreeSet<&String> = ds.documents.iter().map(|d| &d.id).collect();
        for rec in ds.train.iter().chain(&ds.test) {
            assert!(doc_ids.contains(&rec.project_id));
            assert!(doc_ids.contains(&rec.profile_id));
        }
    }

    #[test]
    fn dataset_generation_is_reproducible() {
        let w = world();
        let config = DatasetConfig {
            n_train_projects: 4,
            n_test_projects: 2,
            ..Default::default()
        };
        let a = build_dataset(&w, &config).unwrap();
        let b = build_dataset(&w, &config).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.documents, b.documents);
    }

    #[test]
    fn level_histogram_covers_all_levels() {
        let w = world();
        let config = DatasetConfig {
            n_train_projects: 250,
            n_test_projects: 0,
            noise_prob: 0.0,
            avg_extra_per_project: 1,
            ..Default::default()
        };
        let ds = build_dataset(&w, &config).unwrap();
        let total = ds.train.len() as f64;
        assert!(total >= 1500.0);
        let mut counts = [0usize; 6];
        for rec in &ds.train {
            counts[nearest_level_index(rec.teacher_score)] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                c as f64 / total >= 0.05,
                "level {i} has {c}/{total} records"
            );
        }
    }

    #[test]
    fn ood_rows_are_tagged_on_test_only() {
        let w = world();
        let config = DatasetConfig {
            n_train_projects: 3,
            n_test_projects: 3,
            ..Default::default()
        };
        let ds = build_dataset(&w, &config).unwrap();
        assert!(ds.train.iter().all(|r| !r.metadata.contains_key("ood")));
        let unsuitable = ds
            .test
            .iter()
            .filter(|r| r.metadata.get("ood").map(String::as_str) == Some("unsuitable"))
            .count();
        assert_eq!(unsuitable, 3 * config.ood_unsuitable_per_test_project);
        let average = ds
            .test
            .iter()
            .filter(|r| r.metadata.get("ood").map(String::as_str) == Some("average"))
            .count();
        assert_eq!(average, 3 * config.ood_average_per_test_project);
    }

    #[test]
    fn world_round_trips_through_json() {
        let w = world();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        w.save(&path).unwrap();
        let back = SkillWorld::load(&path).unwrap();
        assert_eq!(back.skills, w.skills);
        assert_eq!(back.relatedness, w.relatedness);
    }
}
