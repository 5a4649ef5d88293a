//! Seeded synthetic corpus shaped like the tutoring-chat data: short,
//! slangy on-topic answers to the lesson phases and a minority of requests
//! to leave the lesson.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{Annotation, CorpusError, Dataset, Intent, LabeledMessage};
use crate::seed;

pub const CONTINUE_TEMPLATES: &[&str] = &[
    "yes",
    "yh",
    "okay",
    "100yrs",
    "forever",
    "no",
    "how",
    "maybe",
    "one day",
    "where is that?",
    "tell me more",
    "what is that",
    "interesting",
    "i did not know that",
    "thousands of years",
    "very old",
    "yes i would like to study there",
    "i am proud",
    "that is exciting",
    "who built the university",
    "since ancient times",
    "wow really",
    "is timbuktu in mali",
    "what is the bamana code",
    "i never heard of it",
    "i think it is very old",
    "yes it is interesting",
    "how did they do it",
    "who invented it",
    "i would love to go there",
];

pub const CHANGE_TEMPLATES: &[&str] = &[
    "Pls can we go straight to the teaching",
    "teach me mathematics",
    "What is the LCM of 16",
    "I want to stop",
    "Can u solve math question 4 me",
    "i dont want this history",
    "this is boring",
    "take me to the math lesson",
    "i want to learn fractions",
    "stop this conversation",
    "change the topic",
    "lets do algebra instead",
    "i want to quit",
    "help me with my homework",
    "solve 2x plus 3 equals 7",
    "give me math questions",
    "i am tired of this story",
    "go back to the menu",
    "skip this lesson",
    "teach me how to divide",
];

const FILLERS: &[&str] = &["hmm", "sir", "bro", "madam", "ehn", "abeg", "lol", "chale"];
const PUNCT: &[&str] = &["", "", "!", "?", "..", "!!"];

fn perturb<R: Rng>(template: &str, rng: &mut R) -> String {
    let mut words: Vec<String> = template.split(' ').map(str::to_string).collect();

    // elongate the final letter of one word ("yes" -> "yesss")
    if rng.gen_bool(0.2) {
        let w = rng.gen_range(0..words.len());
        if let Some(last) = words[w].chars().last().filter(|c| c.is_alphabetic()) {
            let extra = rng.gen_range(1..=3);
            words[w].extend(std::iter::repeat_n(last, extra));
        }
    }
    if rng.gen_bool(0.25) {
        let filler = FILLERS.choose(rng).unwrap().to_string();
        if rng.gen_bool(0.5) {
            words.insert(0, filler);
        } else {
            words.push(filler);
        }
    }

    let mut text = words.join(" ");
    text = match rng.gen_range(0..10) {
        0..=5 => text,
        6 | 7 => text.to_lowercase(),
        8 => text.to_uppercase(),
        _ => {
            let mut c = text.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => text,
            }
        }
    };
    text.push_str(PUNCT.choose(rng).unwrap());
    text
}

/// Generates `n` messages of which exactly `round(n * positive_rate)` are
/// `ChangeTopic`. Conversations hold 1..=7 messages; roughly the first 28% of
/// messages carry a simulated double annotation.
pub fn generate_synthetic_corpus(n: usize, positive_rate: f64, seed: u64) -> Result<Dataset, CorpusError> {
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(CorpusError::InvalidRate(positive_rate));
    }
    if n < 20 {
        return Err(CorpusError::TooSmall(n));
    }
    let mut rng = seed::rng(seed);
    let n_pos = (n as f64 * positive_rate).round() as usize;
    let mut labels = vec![Intent::Continue; n];
    for i in index::sample(&mut rng, n, n_pos) {
        labels[i] = Intent::ChangeTopic;
    }

    let n_annotated = (n as f64 * 0.28).round() as usize;
    let mut messages = Vec::with_capacity(n);
    let mut conv = 0usize;
    let mut left_in_conv = 0usize;
    let mut pos_in_conv = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if left_in_conv == 0 {
            conv += 1;
            left_in_conv = rng.gen_range(1..=7);
            pos_in_conv = 0;
        }
        left_in_conv -= 1;
        pos_in_conv += 1;

        let pool = match label {
            Intent::Continue => CONTINUE_TEMPLATES,
            Intent::ChangeTopic => CHANGE_TEMPLATES,
        };
        let text = perturb(pool.choose(&mut rng).unwrap(), &mut rng);
        let annotations = if i < n_annotated {
            let second = if rng.gen_bool(0.03) {
                Intent::from_index(1 - label.index())
            } else {
                label
            };
            vec![
                Annotation {
                    annotator: "annotator_a".into(),
                    label,
                },
                Annotation {
                    annotator: "annotator_b".into(),
                    label: second,
                },
            ]
        } else {
            Vec::new()
        };
        messages.push(LabeledMessage {
            conversation_id: format!("synth-c{conv:04}"),
            message_id: format!("synth-m{:05}", i + 1),
            text,
            phase_index: Some(pos_in_conv.min(6) as u8),
            label,
            annotations,
        });
    }
    Dataset::new(messages, format!("synthetic:n={n},rate={positive_rate},seed={seed}"))
}
