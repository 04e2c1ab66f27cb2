//! Generator for bAbI-style stories in the public line format.
//!
//! Covers the location-tracking family that shares the four actors Mary,
//! John, Daniel and Sandra (tasks 1, 6, 7, 8, 9, 11, 12, 13) and the
//! motivations task (20). Every question is answerable from the story and
//! carries supporting-fact ids. Output files follow the
//! `qa{N}_{name}_{split}.txt` naming so [`super::load_task`] finds them.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, Result};

pub const ACTORS: [&str; 4] = ["mary", "john", "daniel", "sandra"];
pub const LOCATIONS: [&str; 6] = ["bathroom", "bedroom", "garden", "hallway", "kitchen", "office"];
pub const OBJECTS: [&str; 3] = ["apple", "football", "milk"];
const MOVE_VERBS: [&str; 5] = ["moved to", "went to", "went back to", "journeyed to", "travelled to"];
const GRAB_VERBS: [&str; 4] = ["got", "took", "picked up", "grabbed"];
const DROP_VERBS: [&str; 4] = ["dropped", "discarded", "put down", "left"];
const THEN: [&str; 4] = ["Then", "After that", "Following that", "Afterwards"];
const COUNTS: [&str; 4] = ["none", "one", "two", "three"];

pub const SUPPORTED_TASKS: [u8; 9] = [1, 6, 7, 8, 9, 11, 12, 13, 20];

pub fn task_name(task: u8) -> Option<&'static str> {
    Some(match task {
        1 => "single-supporting-fact",
        6 => "yes-no-questions",
        7 => "counting",
        8 => "lists-sets",
        9 => "simple-negation",
        11 => "basic-coreference",
        12 => "conjunction",
        13 => "compound-coreference",
        20 => "agents-motivations",
        _ => return None,
    })
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pronoun(actor: &str) -> &'static str {
    match actor {
        "mary" | "sandra" => "she",
        _ => "he",
    }
}

/// Accumulates numbered lines for one story.
struct StoryWriter {
    lines: Vec<String>,
    next_id: usize,
}

impl StoryWriter {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            next_id: 1,
        }
    }

    fn statement(&mut self, text: String) -> usize {
        let id = self.next_id;
        self.lines.push(format!("{id} {text}"));
        self.next_id += 1;
        id
    }

    fn question(&mut self, text: String, answer: &str, support: &[usize]) {
        let id = self.next_id;
        let support: Vec<String> = support.iter().map(usize::to_string).collect();
        self.lines.push(format!("{id} {text} \t{answer}\t{}", support.join(" ")));
        self.next_id += 1;
    }
}

/// Per-actor knowledge tracked while generating location stories.
#[derive(Clone, Default)]
struct ActorState {
    location: Option<&'static str>,
    loc_fact: usize,
    /// Location the actor is known not to be in (task 9).
    not_in: Option<&'static str>,
    carrying: Vec<(&'static str, usize)>,
}

struct World {
    actors: Vec<ActorState>,
    holder: [Option<usize>; 3],
}

impl World {
    fn new() -> Self {
        Self {
            actors: vec![ActorState::default(); ACTORS.len()],
            holder: [None; 3],
        }
    }

    fn known(&self) -> Vec<usize> {
        (0..ACTORS.len()).filter(|&a| self.actors[a].location.is_some()).collect()
    }

    fn move_to(&mut self, a: usize, loc: &'static str, fact: usize) {
        let st = &mut self.actors[a];
        st.location = Some(loc);
        st.loc_fact = fact;
        st.not_in = None;
    }
}

fn random_move<R: Rng>(rng: &mut R, world: &World, a: usize) -> &'static str {
    let cur = world.actors[a].location;
    let choices: Vec<&'static str> = LOCATIONS.iter().copied().filter(|&l| Some(l) != cur).collect();
    choices.choose(rng).copied().expect("locations")
}

/// Emits one object event (grab or drop) for an actor with a known location.
/// Returns false when nothing applicable was possible.
fn object_event<R: Rng>(rng: &mut R, world: &mut World, w: &mut StoryWriter, a: usize) -> bool {
    let free: Vec<usize> = (0..OBJECTS.len()).filter(|&o| world.holder[o].is_none()).collect();
    let held: Vec<usize> = (0..OBJECTS.len()).filter(|&o| world.holder[o] == Some(a)).collect();
    let grab = if held.is_empty() {
        true
    } else if free.is_empty() {
        false
    } else {
        rng.gen_bool(0.6)
    };
    if grab {
        let Some(&o) = free.choose(rng) else {
            return false;
        };
        let verb = GRAB_VERBS.choose(rng).expect("verbs");
        let id = w.statement(format!("{} {} the {} there.", cap(ACTORS[a]), verb, OBJECTS[o]));
        world.holder[o] = Some(a);
        world.actors[a].carrying.push((OBJECTS[o], id));
    } else {
        let o = *held.choose(rng).expect("held");
        let verb = DROP_VERBS.choose(rng).expect("verbs");
        w.statement(format!("{} {} the {}.", cap(ACTORS[a]), verb, OBJECTS[o]));
        world.holder[o] = None;
        world.actors[a].carrying.retain(|(name, _)| *name != OBJECTS[o]);
    }
    true
}

fn plain_move<R: Rng>(rng: &mut R, world: &mut World, w: &mut StoryWriter, a: usize) {
    let loc = random_move(rng, world, a);
    let verb = MOVE_VERBS.choose(rng).expect("verbs");
    let id = w.statement(format!("{} {} the {}.", cap(ACTORS[a]), verb, loc));
    world.move_to(a, loc, id);
}

fn where_question<R: Rng>(rng: &mut R, world: &World, w: &mut StoryWriter) {
    let known = world.known();
    let a = *known.choose(rng).expect("someone has moved");
    let st = &world.actors[a];
    w.question(
        format!("Where is {}?", cap(ACTORS[a])),
        st.location.expect("known"),
        &[st.loc_fact],
    );
}

fn story_task1<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut world = World::new();
    let mut w = StoryWriter::new();
    for _ in 0..5 {
        for _ in 0..2 {
            let a = rng.gen_range(0..ACTORS.len());
            plain_move(rng, &mut world, &mut w, a);
        }
        where_question(rng, &world, &mut w);
    }
    w.lines
}

/// Tasks 6, 7, 8: moves interleaved with object handling.
fn story_objects<R: Rng>(rng: &mut R, task: u8) -> Vec<String> {
    let mut world = World::new();
    let mut w = StoryWriter::new();
    for _ in 0..5 {
        for _ in 0..2 {
            let a = rng.gen_range(0..ACTORS.len());
            let can_handle = world.actors[a].location.is_some();
            if can_handle && rng.gen_bool(0.5) && object_event(rng, &mut world, &mut w, a) {
                continue;
            }
            plain_move(rng, &mut world, &mut w, a);
        }
        let known = world.known();
        let a = *known.choose(rng).expect("someone has moved");
        let st = &world.actors[a];
        let name = cap(ACTORS[a]);
        match task {
            6 => {
                let here = st.location.expect("known");
                let asked = if rng.gen_bool(0.5) {
                    here
                } else {
                    random_move(rng, &world, a)
                };
                let answer = if asked == here { "yes" } else { "no" };
                w.question(format!("Is {name} in the {asked}?"), answer, &[st.loc_fact]);
            }
            7 => {
                let support: Vec<usize> = st.carrying.iter().map(|c| c.1).collect();
                w.question(
                    format!("How many objects is {name} carrying?"),
                    COUNTS[st.carrying.len()],
                    &support,
                );
            }
            _ => {
                let support: Vec<usize> = st.carrying.iter().map(|c| c.1).collect();
                let answer = if st.carrying.is_empty() {
                    "nothing".to_string()
                } else {
                    st.carrying.iter().map(|c| c.0).collect::<Vec<_>>().join(",")
                };
                w.question(format!("What is {name} carrying?"), &answer, &support);
            }
        }
    }
    w.lines
}

fn story_task9<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut world = World::new();
    let mut w = StoryWriter::new();
    for _ in 0..5 {
        for _ in 0..2 {
            let a = rng.gen_range(0..ACTORS.len());
            let name = cap(ACTORS[a]);
            let roll: f64 = rng.gen();
            if roll < 0.25 && world.actors[a].location.is_some() {
                let loc = world.actors[a].location.expect("known");
                let phrase = if rng.gen_bool(0.5) { "is not in" } else { "is no longer in" };
                let id = w.statement(format!("{name} {phrase} the {loc}."));
                let st = &mut world.actors[a];
                st.location = None;
                st.not_in = Some(loc);
                st.loc_fact = id;
            } else if roll < 0.5 {
                let loc = random_move(rng, &world, a);
                let id = w.statement(format!("{name} is in the {loc}."));
                world.move_to(a, loc, id);
            } else {
                plain_move(rng, &mut world, &mut w, a);
            }
        }
        let candidates: Vec<usize> = (0..ACTORS.len())
            .filter(|&a| world.actors[a].location.is_some() || world.actors[a].not_in.is_some())
            .collect();
        let a = *candidates.choose(rng).expect("someone has a fact");
        let st = &world.actors[a];
        let name = cap(ACTORS[a]);
        let (asked, answer) = match (st.location, st.not_in) {
            (Some(here), _) => {
                if rng.gen_bool(0.5) {
                    (here, "yes")
                } else {
                    (random_move(rng, &world, a), "no")
                }
            }
            (None, Some(not)) => (not, "no"),
            (None, None) => unreachable!("filtered above"),
        };
        w.question(format!("Is {name} in the {asked}?"), answer, &[st.loc_fact]);
    }
    w.lines
}

fn story_task11<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut world = World::new();
    let mut w = StoryWriter::new();
    let mut last_subject: Option<usize> = None;
    for _ in 0..5 {
        for _ in 0..2 {
            let verb = MOVE_VERBS.choose(rng).expect("verbs");
            match last_subject {
                Some(a) if rng.gen_bool(0.5) => {
                    let loc = random_move(rng, &world, a);
                    let then = THEN.choose(rng).expect("connectives");
                    let id = w.statement(format!("{then} {} {verb} the {loc}.", pronoun(ACTORS[a])));
                    world.move_to(a, loc, id);
                }
                _ => {
                    let a = rng.gen_range(0..ACTORS.len());
                    let loc = random_move(rng, &world, a);
                    let id = w.statement(format!("{} {verb} the {loc}.", cap(ACTORS[a])));
                    world.move_to(a, loc, id);
                    last_subject = Some(a);
                }
            }
        }
        where_question(rng, &world, &mut w);
    }
    w.lines
}

/// Tasks 12 and 13: pairs of actors moving together, with `they` for 13.
fn story_pairs<R: Rng>(rng: &mut R, task: u8) -> Vec<String> {
    let mut world = World::new();
    let mut w = StoryWriter::new();
    let mut last_pair: Option<(usize, usize)> = None;
    for _ in 0..5 {
        for _ in 0..2 {
            let verb = MOVE_VERBS.choose(rng).expect("verbs");
            let loc = *LOCATIONS.choose(rng).expect("locations");
            let id;
            let pair;
            match last_pair {
                Some(p) if task == 13 && rng.gen_bool(0.5) => {
                    let then = THEN.choose(rng).expect("connectives");
                    id = w.statement(format!("{then} they {verb} the {loc}."));
                    pair = p;
                }
                _ => {
                    let mut two: Vec<usize> = (0..ACTORS.len()).collect();
                    two.shuffle(rng);
                    pair = (two[0], two[1]);
                    id = w.statement(format!(
                        "{} and {} {verb} the {loc}.",
                        cap(ACTORS[pair.0]),
                        cap(ACTORS[pair.1])
                    ));
                }
            }
            world.move_to(pair.0, loc, id);
            world.move_to(pair.1, loc, id);
            last_pair = Some(pair);
        }
        where_question(rng, &world, &mut w);
    }
    w.lines
}

const AGENTS: [&str; 4] = ["sumit", "yann", "antoine", "jason"];
const MOTIVES: [(&str, &str, &str); 4] = [
    ("hungry", "kitchen", "apple"),
    ("thirsty", "kitchen", "milk"),
    ("tired", "bedroom", "pajamas"),
    ("bored", "garden", "football"),
];

fn story_task20<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut w = StoryWriter::new();
    let mut agents: Vec<usize> = (0..AGENTS.len()).collect();
    agents.shuffle(rng);
    let n = rng.gen_range(2..=AGENTS.len());
    for &a in &agents[..n] {
        let (motive, place, object) = *MOTIVES.choose(rng).expect("motives");
        let name = AGENTS[a];
        let why = w.statement(format!("{} is {motive}.", cap(name)));
        w.question(format!("Where will {name} go?"), place, &[why]);
        let verb = MOVE_VERBS.choose(rng).expect("verbs");
        let went = w.statement(format!("{} {verb} the {place}.", cap(name)));
        w.question(format!("Why did {name} go to the {place}?"), motive, &[why]);
        let grab = GRAB_VERBS.choose(rng).expect("verbs");
        w.statement(format!("{} {grab} the {object} there.", cap(name)));
        w.question(format!("Why did {name} get the {object}?"), motive, &[why, went]);
    }
    w.lines
}

fn story<R: Rng>(task: u8, rng: &mut R) -> Result<Vec<String>> {
    Ok(match task {
        1 => story_task1(rng),
        6..=8 => story_objects(rng, task),
        9 => story_task9(rng),
        11 => story_task11(rng),
        12 | 13 => story_pairs(rng, task),
        20 => story_task20(rng),
        other => return Err(DataError::BadTask(other)),
    })
}

/// Generates whole stories until at least `n_questions` questions exist and
/// returns the lines of the stories needed.
pub fn generate_task<R: Rng>(task: u8, n_questions: usize, rng: &mut R) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut questions = 0;
    while questions < n_questions {
        let s = story(task, rng)?;
        questions += s.iter().filter(|l| l.contains('\t')).count();
        lines.extend(s);
    }
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    /// The 10k layout: 9000 train, 1000 validation, 1000 test questions.
    pub const TEN_K: Self = Self {
        train: 9000,
        valid: 1000,
        test: 1000,
    };
}

/// Writes `qa{task}_{name}_{train,valid,test}.txt` into `dir`. Each split of
/// each task uses its own rng stream derived from `seed`.
pub fn write_dataset(dir: &Path, tasks: &[u8], sizes: SplitSizes, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    for &task in tasks {
        let name = task_name(task).ok_or(DataError::BadTask(task))?;
        for (i, (split, n)) in [("train", sizes.train), ("valid", sizes.valid), ("test", sizes.test)]
            .into_iter()
            .enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((task as u64) << 32) ^ (i as u64 + 1));
            let lines = generate_task(task, n, &mut rng)?;
            let path = dir.join(format!("qa{task}_{name}_{split}.txt"));
            let mut text = lines.join("\n");
            text.push('\n');
            fs::write(&path, text).map_err(|e| DataError::io(&path, e))?;
        }
    }
    Ok(())
}
