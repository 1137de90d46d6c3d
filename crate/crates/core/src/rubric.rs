//! The six-level relevance rubric shared by the synthetic teacher and the
//! batch sampler.

/// Discrete teacher score levels, low to high.
pub const LEVELS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Human-readable meaning of each level, mirroring the teacher's reference
/// list of matching interpretations.
pub const LEVEL_DESCRIPTIONS: [&str; 6] = [
    "No relevant skills or experience. Completely unable to perform the job.",
    "Minor relevance. Few matching skills or limited experience. High chance they will be unable to perform the job.",
    "Moderate match. Some relevant skills or experience. Would probably not be able to do the job.",
    "Good match. Mostly relevant skills and experience. Can perform with some ramp-up.",
    "Strong match. Highly relevant skills and experience. Ready to perform well.",
    "Perfect match. Skills and experience fully aligned with job needs. Expert on the topic.",
];

/// Index (0..=5) of the level nearest to `score`; midpoint ties round toward
/// the lower level.
pub fn nearest_level_index(score: f64) -> usize {
    let clamped = score.clamp(0.0, 1.0);
    let scaled = clamped * 5.0;
    let lo = scaled.floor() as usize;
    if lo >= 5 {
        return 5;
    }
    if scaled - lo as f64 <= 0.5 {
        lo
    } else {
        lo + 1
    }
}

/// The level value nearest to `score` (ties round down).
pub fn nearest_level(score: f64) -> f64 {
    LEVELS[nearest_level_index(score)]
}
