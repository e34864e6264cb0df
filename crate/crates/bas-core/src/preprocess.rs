//! Answer highlighting: detect the question's expected answer type, tag named
//! entities in the candidate answer, and replace entities of the matching
//! type with `SPECIAL_TOKEN`.
//!
//! The answer-type classifier and the entity tagger are pluggable. The
//! built-in fallbacks (an interrogative-keyword rule table and a gazetteer
//! plus number/date regexes) keep the pipeline fully offline and
//! deterministic; external adapters can be configured and fall back to the
//! rules when unreachable. Questions are never modified, only candidate
//! answers.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use regex::Regex;

use crate::error::{Error, Result};
use crate::tokenizer::HIGHLIGHT_TOKEN;

/// Coarse expected-answer-type classes that participate in highlighting.
/// `None` disables highlighting for the question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EatClass {
    Hum,
    Loc,
    Enty,
    Num,
    None,
}

impl fmt::Display for EatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EatClass::Hum => "HUM",
            EatClass::Loc => "LOC",
            EatClass::Enty => "ENTY",
            EatClass::Num => "NUM",
            EatClass::None => "NONE",
        };
        f.write_str(s)
    }
}

impl EatClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HUM" => Some(EatClass::Hum),
            "LOC" => Some(EatClass::Loc),
            "ENTY" => Some(EatClass::Enty),
            "NUM" => Some(EatClass::Num),
            "NONE" => Some(EatClass::None),
            _ => Option::None,
        }
    }
}

/// Named-entity occurrence in an answer. Offsets are half-open character
/// positions (not bytes) and `surface` is exactly the covered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub tag: String,
    pub surface: String,
}

/// Entity-tag to answer-type mapping. Tags are matched case-insensitively
/// with `_` treated as a space, so `WORK_OF_ART` and `WORK OF ART` agree.
/// Unknown tags map to [`EatClass::None`] and never trigger highlighting.
pub fn map_ner_tag(tag: &str) -> EatClass {
    let normalized = tag.trim().to_ascii_uppercase().replace('_', " ");
    match normalized.as_str() {
        "PERSON" | "ORG" | "NORP" => EatClass::Hum,
        "LOC" | "GPE" => EatClass::Loc,
        "PRODUCT" | "EVENT" | "LANGUAGE" | "WORK OF ART" | "LAW" | "FAC" => EatClass::Enty,
        "DATE" | "TIME" | "PERCENT" | "MONEY" | "QUANTITY" | "ORDINAL" | "CARDINAL" => {
            EatClass::Num
        }
        _ => EatClass::None,
    }
}

/// Classifies a question into a coarse expected answer type. Implementations
/// never fail hard; external adapters fall back to the rules.
pub trait EatDetector: Send + Sync {
    fn detect(&self, question: &str) -> EatClass;
}

/// Keyword fallback: the first interrogative keyword in the question wins.
#[derive(Debug, Default, Clone)]
pub struct RuleEatDetector;

impl EatDetector for RuleEatDetector {
    fn detect(&self, question: &str) -> EatClass {
        let words: Vec<String> = question
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        for (i, word) in words.iter().enumerate() {
            if word == "how" {
                if let Some(next) = words.get(i + 1) {
                    if matches!(next.as_str(), "many" | "much" | "old" | "long") {
                        return EatClass::Num;
                    }
                }
                continue;
            }
            match word.as_str() {
                "who" | "whom" | "whose" => return EatClass::Hum,
                "where" => return EatClass::Loc,
                "when" => return EatClass::Num,
                "what" | "which" | "name" => return EatClass::Enty,
                _ => {}
            }
        }
        EatClass::None
    }
}

/// Adapter for an external answer-type service: HTTP GET returning a coarse
/// class string. Unreachable or unparseable responses fall back to the rule
/// table with a warning.
pub struct HttpEatDetector {
    endpoint: String,
    timeout: Duration,
    fallback: RuleEatDetector,
}

impl HttpEatDetector {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            fallback: RuleEatDetector,
        }
    }

    fn query(&self, question: &str) -> std::result::Result<String, ureq::Error> {
        let url = format!("{}?question={}", self.endpoint, percent_encode(question));
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build();
        let agent = ureq::Agent::new_with_config(config);
        let mut response = agent.get(&url).call()?;
        response.body_mut().read_to_string()
    }
}

impl EatDetector for HttpEatDetector {
    fn detect(&self, question: &str) -> EatClass {
        match self.query(question) {
            Ok(body) => match EatClass::parse(&body) {
                Some(class) => class,
                Option::None => {
                    log::warn!("answer-type service returned '{body}'; using rule fallback");
                    self.fallback.detect(question)
                }
            },
            Err(err) => {
                log::warn!("answer-type service unreachable ({err}); using rule fallback");
                self.fallback.detect(question)
            }
        }
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for byte in s.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

/// Produces entity spans for an answer text.
pub trait EntityTagger: Send + Sync {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>>;
}

/// Gazetteer fallback: case-sensitive longest match of multi-word entries at
/// word boundaries, plus regex rules tagging 4-digit years as DATE and other
/// standalone numbers as CARDINAL.
#[derive(Debug)]
pub struct GazetteerTagger {
    /// (surface chars, tag), sorted longest-first for greedy matching.
    entries: Vec<(Vec<char>, String)>,
    year: Regex,
    number: Regex,
}

impl GazetteerTagger {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        let mut entries: Vec<(Vec<char>, String)> = entries
            .into_iter()
            .map(|(surface, tag)| (surface.chars().collect(), tag))
            .collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Self {
            entries,
            year: Regex::new(r"\b[12]\d{3}\b").expect("year regex"),
            number: Regex::new(r"\b\d+(?:[.,]\d+)*\b").expect("number regex"),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    /// Loads and merges gazetteer files: UTF-8 lines `surface<TAB>TAG`.
    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut entries = Vec::new();
        for path in paths {
            let text = std::fs::read_to_string(path)?;
            Self::parse_lines(&text, &mut entries)?;
        }
        Ok(Self::new(entries))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        Self::parse_lines(text, &mut entries)?;
        Ok(Self::new(entries))
    }

    fn parse_lines(text: &str, entries: &mut Vec<(String, String)>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.is_empty() {
                continue;
            }
            let (surface, tag) = trimmed
                .split_once('\t')
                .ok_or_else(|| Error::format_at(line, "expected 'surface<TAB>TAG'"))?;
            if surface.is_empty() || tag.is_empty() {
                return Err(Error::format_at(line, "empty surface or tag"));
            }
            // The replacement token must never be re-taggable, otherwise
            // highlighting would not be idempotent.
            if surface.contains(HIGHLIGHT_TOKEN) {
                return Err(Error::format_at(
                    line,
                    format!("gazetteer surface may not contain {HIGHLIGHT_TOKEN}"),
                ));
            }
            entries.push((surface.to_string(), tag.to_string()));
        }
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

impl EntityTagger for GazetteerTagger {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let chars: Vec<char> = text.chars().collect();
        let mut spans: Vec<EntitySpan> = Vec::new();

        let mut i = 0;
        while i < chars.len() {
            let at_boundary = i == 0 || !is_word_char(chars[i - 1]);
            if !at_boundary {
                i += 1;
                continue;
            }
            let mut matched = None;
            for (surface, tag) in &self.entries {
                let end = i + surface.len();
                if end > chars.len() || chars[i..end] != surface[..] {
                    continue;
                }
                if end < chars.len() && is_word_char(chars[end]) {
                    continue;
                }
                matched = Some((end, tag.clone()));
                break; // entries are sorted longest-first
            }
            if let Some((end, tag)) = matched {
                spans.push(EntitySpan {
                    start: i,
                    end,
                    tag,
                    surface: chars[i..end].iter().collect(),
                });
                i = end;
            } else {
                i += 1;
            }
        }

        // Regex rules over regions not already covered.
        let byte_to_char: Vec<usize> = {
            let mut map = vec![0; text.len() + 1];
            for (ci, (bi, _)) in text.char_indices().enumerate() {
                map[bi] = ci;
            }
            map[text.len()] = chars.len();
            map
        };
        let add_regex = |regex: &Regex, tag: &str, spans: &mut Vec<EntitySpan>| {
            for m in regex.find_iter(text) {
                let (start, end) = (byte_to_char[m.start()], byte_to_char[m.end()]);
                if spans.iter().any(|s| start < s.end && s.start < end) {
                    continue;
                }
                spans.push(EntitySpan {
                    start,
                    end,
                    tag: tag.to_string(),
                    surface: m.as_str().to_string(),
                });
            }
        };
        add_regex(&self.year, "DATE", &mut spans);
        add_regex(&self.number, "CARDINAL", &mut spans);

        spans.sort_by_key(|s| s.start);
        Ok(spans)
    }
}

/// Adapter for an external tagger invoked as a subprocess: the answer text is
/// written to stdin and spans are read back as `start<TAB>end<TAB>TAG` lines
/// (character offsets). Any failure falls back to the gazetteer.
pub struct CommandTagger {
    command: Vec<String>,
    fallback: GazetteerTagger,
}

impl CommandTagger {
    pub fn new(command: Vec<String>, fallback: GazetteerTagger) -> Self {
        Self { command, fallback }
    }

    fn run(&self, text: &str) -> std::io::Result<Vec<EntitySpan>> {
        use std::io::Write;
        use std::process::{Command, Stdio};

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(text.as_bytes())?;
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(std::io::Error::other(format!(
                "tagger exited with {}",
                output.status
            )));
        }
        let chars: Vec<char> = text.chars().collect();
        let stdout = String::from_utf8_lossy(&output.stdout);
        let mut spans = Vec::new();
        for line in stdout.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.splitn(3, '\t');
            let parse = |s: Option<&str>| -> std::io::Result<usize> {
                s.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| std::io::Error::other(format!("bad tagger line '{line}'")))
            };
            let start = parse(parts.next())?;
            let end = parse(parts.next())?;
            let tag = parts
                .next()
                .ok_or_else(|| std::io::Error::other(format!("bad tagger line '{line}'")))?;
            if start >= end || end > chars.len() {
                return Err(std::io::Error::other(format!(
                    "span {start}..{end} out of range"
                )));
            }
            spans.push(EntitySpan {
                start,
                end,
                tag: tag.trim().to_string(),
                surface: chars[start..end].iter().collect(),
            });
        }
        Ok(spans)
    }
}

impl EntityTagger for CommandTagger {
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        match self.run(text) {
            Ok(spans) => Ok(spans),
            Err(err) => {
                log::warn!("external tagger failed ({err}); using gazetteer fallback");
                self.fallback.tag(text)
            }
        }
    }
}

/// Replaces every span whose mapped class equals `eat` with
/// [`HIGHLIGHT_TOKEN`]; all other spans keep their original surface text.
/// Replacements run right-to-left so earlier offsets stay valid.
pub fn highlight(answer: &str, eat: EatClass, spans: &[EntitySpan]) -> Result<String> {
    let chars: Vec<char> = answer.chars().collect();

    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for window in sorted.windows(2) {
        if window[1].start < window[0].end {
            return Err(Error::data(format!(
                "overlapping entity spans {}..{} and {}..{}",
                window[0].start, window[0].end, window[1].start, window[1].end
            )));
        }
    }
    for span in &sorted {
        if span.start >= span.end || span.end > chars.len() {
            return Err(Error::data(format!(
                "entity span {}..{} out of bounds for {}-character answer",
                span.start,
                span.end,
                chars.len()
            )));
        }
        let actual: String = chars[span.start..span.end].iter().collect();
        if actual != span.surface {
            return Err(Error::data(format!(
                "entity surface '{}' does not match answer text '{actual}'",
                span.surface
            )));
        }
    }

    if eat == EatClass::None {
        return Ok(answer.to_string());
    }

    let mut out = chars;
    for span in sorted.into_iter().rev() {
        if map_ner_tag(&span.tag) == eat {
            out.splice(span.start..span.end, HIGHLIGHT_TOKEN.chars());
        }
    }
    Ok(out.into_iter().collect())
}

/// The preprocessing pipeline: answer-type detection composed with entity
/// tagging and highlighting.
pub struct Preprocessor {
    detector: Box<dyn EatDetector>,
    tagger: Box<dyn EntityTagger>,
}

impl Preprocessor {
    pub fn new(detector: Box<dyn EatDetector>, tagger: Box<dyn EntityTagger>) -> Self {
        Self { detector, tagger }
    }

    /// Fully offline pipeline with the rule detector and a gazetteer.
    pub fn rule_based(gazetteer: GazetteerTagger) -> Self {
        Self::new(Box::new(RuleEatDetector), Box::new(gazetteer))
    }

    pub fn detect_eat(&self, question: &str) -> EatClass {
        self.detector.detect(question)
    }

    pub fn tag_entities(&self, text: &str) -> Result<Vec<EntitySpan>> {
        self.tagger.tag(text)
    }

    /// Returns the highlighted answer and the detected answer type. The
    /// question text is passed through untouched.
    pub fn preprocess_pair(&self, question: &str, answer: &str) -> Result<(String, EatClass)> {
        let eat = self.detector.detect(question);
        let spans = self.tagger.tag(answer)?;
        let highlighted = highlight(answer, eat, &spans)?;
        Ok((highlighted, eat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_gazetteer() -> GazetteerTagger {
        GazetteerTagger::from_text(
            "Alexander Graham Bell\tPERSON\ntelephone\tPRODUCT\nBell\tPERSON\n",
        )
        .unwrap()
    }

    #[test]
    fn rule_detector_examples() {
        let d = RuleEatDetector;
        assert_eq!(d.detect("Who is the telephone inventor?"), EatClass::Hum);
        assert_eq!(d.detect("Where is the Eiffel Tower?"), EatClass::Loc);
        assert_eq!(d.detect("List the ingredients."), EatClass::None);
        assert_eq!(d.detect("When was it built?"), EatClass::Num);
        assert_eq!(d.detect("How many moons does Mars have?"), EatClass::Num);
        assert_eq!(d.detect("How does it work?"), EatClass::None);
        assert_eq!(d.detect("What color is it?"), EatClass::Enty);
        // First keyword wins.
        assert_eq!(d.detect("Who knows how many?"), EatClass::Hum);
    }

    #[test]
    fn tag_mapping_follows_the_table() {
        assert_eq!(map_ner_tag("PERSON"), EatClass::Hum);
        assert_eq!(map_ner_tag("GPE"), EatClass::Loc);
        assert_eq!(map_ner_tag("WORK OF ART"), EatClass::Enty);
        assert_eq!(map_ner_tag("WORK_OF_ART"), EatClass::Enty);
        assert_eq!(map_ner_tag("CARDINAL"), EatClass::Num);
        assert_eq!(map_ner_tag("MISC"), EatClass::None);
    }

    #[test]
    fn gazetteer_tags_the_worked_example() {
        let tagger = example_gazetteer();
        let spans = tagger
            .tag("The first telephone was invented by Alexander Graham Bell.")
            .unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].surface, "telephone");
        assert_eq!(spans[0].tag, "PRODUCT");
        assert_eq!(spans[1].surface, "Alexander Graham Bell");
        assert_eq!(spans[1].tag, "PERSON");
        assert_eq!(spans[1].start, 36);
        assert_eq!(spans[1].end, 57);
    }

    #[test]
    fn empty_gazetteer_tags_nothing() {
        let tagger = GazetteerTagger::empty();
        assert_eq!(tagger.tag("nothing here").unwrap(), vec![]);
    }

    #[test]
    fn regex_rules_tag_years_and_numbers() {
        let tagger = GazetteerTagger::empty();
        let spans = tagger.tag("In 1875, 42 things happened.").unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].surface, "1875");
        assert_eq!(spans[0].tag, "DATE");
        assert_eq!(spans[1].surface, "42");
        assert_eq!(spans[1].tag, "CARDINAL");
    }

    #[test]
    fn gazetteer_match_is_longest_first_and_case_sensitive() {
        let tagger = example_gazetteer();
        // "Alexander Graham Bell" wins over the shorter "Bell".
        let spans = tagger.tag("Alexander Graham Bell spoke.").unwrap();
        assert_eq!(spans[0].surface, "Alexander Graham Bell");
        // Case matters.
        let spans = tagger.tag("the bell rang").unwrap();
        assert!(spans.is_empty());
        // No match inside a longer word.
        let spans = tagger.tag("Bellwether").unwrap();
        assert!(spans.is_empty());
    }

    #[test]
    fn gazetteer_rejects_highlight_token_entries() {
        let err = GazetteerTagger::from_text("SPECIAL_TOKEN\tPERSON\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(1), .. }));
        let err = GazetteerTagger::from_text("ok\tTAG\nbad SPECIAL_TOKEN x\tORG\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(2), .. }));
    }

    #[test]
    fn gazetteer_rejects_malformed_lines() {
        assert!(matches!(
            GazetteerTagger::from_text("no tab here\n"),
            Err(Error::Format { line: Some(1), .. })
        ));
    }

    #[test]
    fn highlight_replaces_only_matching_classes() {
        let answer = "The first telephone was invented by Alexander Graham Bell.";
        let spans = example_gazetteer().tag(answer).unwrap();
        let out = highlight(answer, EatClass::Hum, &spans).unwrap();
        // ENTY "telephone" survives; the PERSON becomes the special token.
        assert_eq!(out, "The first telephone was invented by SPECIAL_TOKEN.");
    }

    #[test]
    fn highlight_with_none_is_identity() {
        let answer = "The first telephone was invented by Alexander Graham Bell.";
        let spans = example_gazetteer().tag(answer).unwrap();
        assert_eq!(highlight(answer, EatClass::None, &spans).unwrap(), answer);
    }

    #[test]
    fn highlight_replaces_every_match() {
        let answer = "Bell met Bell.";
        let spans = example_gazetteer().tag(answer).unwrap();
        assert_eq!(spans.len(), 2);
        let out = highlight(answer, EatClass::Hum, &spans).unwrap();
        assert_eq!(out, "SPECIAL_TOKEN met SPECIAL_TOKEN.");
    }

    #[test]
    fn highlight_rejects_overlapping_or_mismatched_spans() {
        let answer = "abcdef";
        let overlapping = vec![
            EntitySpan {
                start: 0,
                end: 3,
                tag: "PERSON".into(),
                surface: "abc".into(),
            },
            EntitySpan {
                start: 2,
                end: 5,
                tag: "PERSON".into(),
                surface: "cde".into(),
            },
        ];
        assert!(matches!(
            highlight(answer, EatClass::Hum, &overlapping),
            Err(Error::Data(_))
        ));
        let mismatched = vec![EntitySpan {
            start: 0,
            end: 3,
            tag: "PERSON".into(),
            surface: "xyz".into(),
        }];
        assert!(matches!(
            highlight(answer, EatClass::Hum, &mismatched),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn preprocess_pair_matches_the_worked_example() {
        let pre = Preprocessor::rule_based(example_gazetteer());
        let question = "Who is the telephone inventor?";

        let (highlighted, eat) = pre
            .preprocess_pair(
                question,
                "The first telephone was invented by Alexander Graham Bell.",
            )
            .unwrap();
        assert_eq!(eat, EatClass::Hum);
        assert_eq!(
            highlighted,
            "The first telephone was invented by SPECIAL_TOKEN."
        );

        // A DATE maps to NUM, not HUM, so this answer is untouched.
        let (unchanged, _) = pre
            .preprocess_pair(question, "The first telephone was invented in 1875.")
            .unwrap();
        assert_eq!(unchanged, "The first telephone was invented in 1875.");

        // No interrogative keyword disables highlighting entirely.
        let (unchanged, eat) = pre
            .preprocess_pair("List the ingredients.", "Made by Alexander Graham Bell.")
            .unwrap();
        assert_eq!(eat, EatClass::None);
        assert_eq!(unchanged, "Made by Alexander Graham Bell.");
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let pre = Preprocessor::rule_based(example_gazetteer());
        let question = "Who is the telephone inventor?";
        let answer = "In 1875 the telephone was invented by Alexander Graham Bell.";
        let (once, _) = pre.preprocess_pair(question, answer).unwrap();
        let (twice, _) = pre.preprocess_pair(question, &once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn highlight_preserves_text_outside_spans() {
        let answer = "a Bell b Bell c";
        let spans = example_gazetteer().tag(answer).unwrap();
        let out = highlight(answer, EatClass::Hum, &spans).unwrap();
        assert_eq!(out, "a SPECIAL_TOKEN b SPECIAL_TOKEN c");
    }

    #[test]
    fn http_detector_falls_back_when_unreachable() {
        let detector = HttpEatDetector::new("http://127.0.0.1:1/eat", Duration::from_millis(50));
        assert_eq!(detector.detect("Who is it?"), EatClass::Hum);
    }

    // One-shot HTTP server answering a fixed class; exercises the live
    // adapter path end to end.
    #[test]
    fn http_detector_uses_the_service_response() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let n = stream.read(&mut buf).unwrap();
            let request = String::from_utf8_lossy(&buf[..n]).to_string();
            stream
                .write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 3\r\nConnection: close\r\n\r\nLOC")
                .unwrap();
            request
        });

        let detector = HttpEatDetector::new(format!("http://{addr}/eat"), Duration::from_secs(2));
        // The rule fallback would say HUM; the service says LOC.
        assert_eq!(
            detector.detect("Who built the Eiffel Tower?"),
            EatClass::Loc
        );
        let request = server.join().unwrap();
        assert!(request.contains("question=Who%20built"), "{request}");
    }

    #[test]
    fn command_tagger_parses_spans_and_falls_back() {
        // A fixed tagger emitting one span via the shell.
        let tagger = CommandTagger::new(
            vec![
                "sh".to_string(),
                "-c".to_string(),
                "cat > /dev/null; printf '0\\t4\\tPERSON\\n'".to_string(),
            ],
            GazetteerTagger::empty(),
        );
        let spans = tagger.tag("Bell rang").unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Bell");
        assert_eq!(spans[0].tag, "PERSON");

        // A failing command falls back to the gazetteer.
        let tagger =
            CommandTagger::new(vec!["/nonexistent/tagger".to_string()], example_gazetteer());
        let spans = tagger.tag("the telephone rang").unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].tag, "PRODUCT");

        // Malformed output also falls back rather than failing hard.
        let tagger = CommandTagger::new(
            vec![
                "sh".to_string(),
                "-c".to_string(),
                "cat > /dev/null; echo garbage".to_string(),
            ],
            example_gazetteer(),
        );
        let spans = tagger.tag("the telephone rang").unwrap();
        assert_eq!(spans[0].tag, "PRODUCT");
    }
}
