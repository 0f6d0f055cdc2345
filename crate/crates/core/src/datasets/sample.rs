use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::letter::Letter;
use crate::tokenizer::Codec;

/// One multiple-choice prompt, rendered and tokenized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqSample {
    pub id: String,
    pub tag: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold: Letter,
    pub prompt: String,
    pub tokens: Vec<u32>,
    /// Token index of each answer letter in the final "Answer Choices:" block.
    pub letter_positions: Vec<usize>,
    pub k_shot: usize,
}

/// A solved example prepended to the prompt for few-shot runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub choices: Vec<String>,
    pub gold: Letter,
}

impl From<&McqSample> for Exemplar {
    fn from(s: &McqSample) -> Self {
        Exemplar {
            question: s.question.clone(),
            choices: s.choices.clone(),
            gold: s.gold,
        }
    }
}

/// Everything about a sample except its gold letter. Plans built for
/// held-out evaluation only ever see this view.
#[derive(Debug, Clone, Copy)]
pub struct PromptView<'a> {
    pub id: &'a str,
    pub tokens: &'a [u32],
    pub letter_positions: &'a [usize],
}

impl PromptView<'_> {
    pub fn arity(&self) -> usize {
        self.letter_positions.len()
    }

    pub fn position_of(&self, letter: Letter) -> Result<usize> {
        self.letter_positions
            .get(letter.index())
            .copied()
            .ok_or_else(|| Error::LetterPositions(format!("{}: no choice {letter}", self.id)))
    }
}

impl McqSample {
    pub fn arity(&self) -> usize {
        self.choices.len()
    }

    pub fn unlabeled(&self) -> PromptView<'_> {
        PromptView {
            id: &self.id,
            tokens: &self.tokens,
            letter_positions: &self.letter_positions,
        }
    }

    pub fn exemplar(&self) -> Exemplar {
        Exemplar::from(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub tokens: Vec<u32>,
    pub letter_positions: Vec<usize>,
}

fn check_choices(choices: &[String]) -> Result<()> {
    if !(2..=5).contains(&choices.len()) {
        return Err(Error::InvalidArgument(format!(
            "need 2 to 5 choices, got {}",
            choices.len()
        )));
    }
    if let Some(i) = choices.iter().position(|c| c.trim().is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "choice {} is empty",
            Letter::ALL[i]
        )));
    }
    Ok(())
}

/// Byte offsets inside a rendered prompt: start of each " X:" letter marker
/// of the final block and of the closing " Answer:".
struct Layout {
    text: String,
    choices_start: usize,
    letters: Vec<usize>,
    tail: usize,
}

fn block(out: &mut String, question: &str, choices: &[String]) -> (usize, Vec<usize>, usize) {
    out.push_str("Question: ");
    out.push_str(question.trim());
    out.push_str(" Answer Choices:");
    let choices_start = out.len();
    let mut letters = Vec::with_capacity(choices.len());
    for (l, c) in Letter::ALL.iter().zip(choices) {
        letters.push(out.len());
        out.push_str(&format!(" {l}: {}", c.trim()));
    }
    let tail = out.len();
    out.push_str(" Answer:");
    (choices_start, letters, tail)
}

fn layout(question: &str, choices: &[String], exemplars: &[Exemplar]) -> Result<Layout> {
    check_choices(choices)?;
    let mut text = String::new();
    for ex in exemplars {
        check_choices(&ex.choices)?;
        if ex.gold.index() >= ex.choices.len() {
            return Err(Error::InvalidLetter(format!(
                "exemplar gold {} beyond {} choices",
                ex.gold,
                ex.choices.len()
            )));
        }
        block(&mut text, &ex.question, &ex.choices);
        text.push_str(&format!(" {} ", ex.gold));
    }
    let (choices_start, letters, tail) = block(&mut text, question, choices);
    Ok(Layout {
        text,
        choices_start,
        letters,
        tail,
    })
}

/// Prompt text only: solved exemplars, then
/// `Question: {q} Answer Choices: A: {c1} B: {c2} ... Answer:`.
pub fn render_text(question: &str, choices: &[String], exemplars: &[Exemplar]) -> Result<String> {
    Ok(layout(question, choices, exemplars)?.text)
}

/// Renders and tokenizes a prompt, locating the answer-letter tokens of the
/// final choice block.
pub fn render_prompt(
    codec: &dyn Codec,
    question: &str,
    choices: &[String],
    exemplars: &[Exemplar],
) -> Result<RenderedPrompt> {
    let lay = layout(question, choices, exemplars)?;
    let letters = codec.letter_set(true)?;
    let text = lay.text;

    // Each " X:" begins a pre-token, so encoding the prompt in segments cut
    // at those offsets gives the same ids and tells us where letters land.
    let mut cuts = vec![0, lay.choices_start];
    cuts.extend(&lay.letters);
    cuts.push(lay.tail);
    cuts.push(text.len());
    cuts.dedup();

    let mut tokens = Vec::new();
    let mut starts = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        starts.push((w[0], tokens.len()));
        tokens.extend(codec.encode(&text[w[0]..w[1]]));
    }
    if tokens != codec.encode(&text) {
        return Err(Error::LetterPositions(
            "segment-wise encoding differs from whole-prompt encoding".into(),
        ));
    }

    let mut letter_positions = Vec::with_capacity(choices.len());
    for (l, &at) in Letter::ALL.iter().zip(&lay.letters) {
        let pos = starts
            .iter()
            .find(|(byte, _)| *byte == at)
            .map(|&(_, tok)| tok)
            .expect("every letter offset is a cut");
        if tokens.get(pos) != Some(&letters.id(*l)) {
            return Err(Error::LetterPositions(format!(
                "letter {l} is not a single token at position {pos}"
            )));
        }
        letter_positions.push(pos);
    }
    Ok(RenderedPrompt {
        text,
        tokens,
        letter_positions,
    })
}

/// Renders, tokenizes and validates one sample.
pub fn build_sample(
    codec: &dyn Codec,
    id: &str,
    tag: &str,
    question: &str,
    choices: &[String],
    gold: Letter,
    exemplars: &[Exemplar],
) -> Result<McqSample> {
    if gold.index() >= choices.len() {
        return Err(Error::InvalidLetter(format!(
            "gold {gold} beyond {} choices",
            choices.len()
        )));
    }
    let r = render_prompt(codec, question, choices, exemplars)?;
    Ok(McqSample {
        id: id.to_string(),
        tag: tag.to_string(),
        question: question.trim().to_string(),
        choices: choices.iter().map(|c| c.trim().to_string()).collect(),
        gold,
        prompt: r.text,
        tokens: r.tokens,
        letter_positions: r.letter_positions,
        k_shot: exemplars.len(),
    })
}

/// Re-renders a sample with exemplars prepended.
pub fn with_exemplars(
    codec: &dyn Codec,
    sample: &McqSample,
    exemplars: &[Exemplar],
) -> Result<McqSample> {
    build_sample(
        codec,
        &sample.id,
        &sample.tag,
        &sample.question,
        &sample.choices,
        sample.gold,
        exemplars,
    )
}
