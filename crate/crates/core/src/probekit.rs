//! Capital → country probes: rendering, answer scoring and per-continent
//! accuracy.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::country::{Continent, CountryCode};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::gazetteer::{City, Gazetteer};

const BUNDLED_ALIASES: &str = include_str!("../data/country_aliases.tsv");

pub const MASK_TOKEN: &str = "<mask>";

const TERMINAL_PUNCTUATION: [char; 6] = ['.', '!', '?', ',', ';', ':'];

/// One-shot exemplar used by the chat template.
const EXEMPLAR_CITY: &str = "Paris";
const EXEMPLAR_COUNTRY: &str = "France";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeFamily {
    Masked,
    Chat,
}

impl ProbeFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeFamily::Masked => "masked",
            ProbeFamily::Chat => "chat",
        }
    }
}

impl std::str::FromStr for ProbeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked" => Ok(ProbeFamily::Masked),
            "chat" => Ok(ProbeFamily::Chat),
            _ => Err(Error::domain(format!("unknown probe family `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: String) -> Self {
        ChatMessage {
            role: role.to_owned(),
            content,
        }
    }
}

/// Masked sentence or chat transcript handed to the model adapter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rendered {
    Masked(String),
    Chat(Vec<ChatMessage>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub probe_id: String,
    pub family: ProbeFamily,
    pub city_name: String,
    pub expected_country_code: CountryCode,
    pub rendered: Rendered,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub probe_id: String,
    pub raw_answer: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub probe_id: String,
    pub expected_country_code: CountryCode,
    pub matched: bool,
    pub normalized_answer: String,
}

pub fn probe_id(family: ProbeFamily, geoname_id: u64) -> String {
    format!("{}-{geoname_id}", family.as_str())
}

pub fn render_masked(city: &str) -> String {
    format!("{city} is capital of {MASK_TOKEN}")
}

fn chat_question(city: &str) -> String {
    format!("Name the country corresponding to its capital: {city}. Only give the country.")
}

pub fn render_chat(city: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::new("user", chat_question(EXEMPLAR_CITY)),
        ChatMessage::new("assistant", EXEMPLAR_COUNTRY.to_owned()),
        ChatMessage::new("user", chat_question(city)),
    ]
}

fn spec_for(city: &City, family: ProbeFamily) -> ProbeSpec {
    let rendered = match family {
        ProbeFamily::Masked => Rendered::Masked(render_masked(&city.name)),
        ProbeFamily::Chat => Rendered::Chat(render_chat(&city.name)),
    };
    ProbeSpec {
        probe_id: probe_id(family, city.geoname_id),
        family,
        city_name: city.name.clone(),
        expected_country_code: city.country_code,
        rendered,
    }
}

/// One probe per national capital, in country-code order.
pub fn generate_probes(g: &Gazetteer, family: ProbeFamily) -> Vec<ProbeSpec> {
    g.capitals().map(|c| spec_for(c, family)).collect()
}

/// Canonical form used to compare a model answer with the alias table.
pub fn normalize_country_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end_matches(|c: char| TERMINAL_PUNCTUATION.contains(&c) || c.is_whitespace());
    match trimmed.strip_prefix("the ") {
        Some(rest) => rest.trim_start().to_owned(),
        None => trimmed.to_owned(),
    }
}

/// ISO code → accepted answers, each stored in normalized form.
#[derive(Clone, Debug, PartialEq)]
pub struct AliasTable {
    version: String,
    aliases: BTreeMap<CountryCode, Vec<String>>,
}

impl AliasTable {
    pub fn bundled() -> &'static AliasTable {
        static TABLE: OnceLock<AliasTable> = OnceLock::new();
        TABLE.get_or_init(|| AliasTable::parse(BUNDLED_ALIASES).expect("bundled alias table is valid"))
    }

    /// Parses `ISO<TAB>alias|alias|...` lines; the first alias is the display name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = String::from("unversioned");
        let mut aliases = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(rest) = comment.trim().strip_prefix("version ") {
                    version = rest.split(';').next().unwrap_or(rest).trim().to_owned();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i as u64 + 1;
            let (code, names) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(line_no, "expected `ISO<TAB>aliases`"))?;
            let code = CountryCode::new(code).map_err(|e| Error::format(line_no, e.to_string()))?;
            let mut list: Vec<String> = Vec::new();
            for n in names.split('|').map(normalize_country_answer) {
                if !n.is_empty() && !list.contains(&n) {
                    list.push(n);
                }
            }
            if list.is_empty() {
                return Err(Error::format(line_no, format!("no aliases for {code}")));
            }
            aliases.insert(code, list);
        }
        Ok(AliasTable { version, aliases })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn aliases(&self, code: CountryCode) -> &[String] {
        self.aliases.get(&code).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn display_name(&self, code: CountryCode) -> Option<&str> {
        self.aliases.get(&code).and_then(|v| v.first()).map(String::as_str)
    }

    /// Whether `normalized` is an accepted answer for `code`.
    pub fn accepts(&self, code: CountryCode, normalized: &str) -> bool {
        self.aliases(code).iter().any(|a| a == normalized)
    }

    /// True when at least one alias is a single word, i.e. reachable by a
    /// single-slot masked fill.
    pub fn has_single_token_alias(&self, code: CountryCode) -> bool {
        self.aliases(code).iter().any(|a| !a.contains(' '))
    }
}

/// Strips byte-BPE / SentencePiece word-start markers off a masked fill.
fn strip_token_markers(raw: &str) -> &str {
    raw.trim_start().trim_start_matches(['Ġ', '▁'])
}

pub fn score_response(spec: &ProbeSpec, resp: &ProbeResponse, aliases: &AliasTable) -> Result<ProbeScore> {
    if spec.probe_id != resp.probe_id {
        return Err(Error::domain(format!(
            "response `{}` does not belong to probe `{}`",
            resp.probe_id, spec.probe_id
        )));
    }
    let normalized = match spec.family {
        ProbeFamily::Masked => normalize_country_answer(strip_token_markers(&resp.raw_answer)),
        ProbeFamily::Chat => normalize_country_answer(&resp.raw_answer),
    };
    // a masked slot holds one token, so only single-word aliases can match
    let matched = match spec.family {
        ProbeFamily::Masked => !normalized.contains(' ') && aliases.accepts(spec.expected_country_code, &normalized),
        ProbeFamily::Chat => aliases.accepts(spec.expected_country_code, &normalized),
    };
    Ok(ProbeScore {
        probe_id: spec.probe_id.clone(),
        expected_country_code: spec.expected_country_code,
        matched,
        normalized_answer: normalized,
    })
}

/// Scores of a whole response file against the emitted specs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ScoreBatch {
    pub scores: Vec<ProbeScore>,
    /// Specs without a response; scored as unmatched.
    pub missing_responses: Vec<String>,
    /// Responses whose probe id matches no spec; ignored.
    pub unknown_responses: Vec<String>,
}

pub fn score_all(
    specs: &[ProbeSpec],
    responses: &[ProbeResponse],
    aliases: &AliasTable,
    exec: Execution,
) -> ScoreBatch {
    let by_id: HashMap<&str, &ProbeResponse> = responses.iter().map(|r| (r.probe_id.as_str(), r)).collect();
    let scored = map_slice(exec, specs, |spec| match by_id.get(spec.probe_id.as_str()) {
        Some(resp) => (
            score_response(spec, resp, aliases).expect("ids match by construction"),
            false,
        ),
        None => (
            ProbeScore {
                probe_id: spec.probe_id.clone(),
                expected_country_code: spec.expected_country_code,
                matched: false,
                normalized_answer: String::new(),
            },
            true,
        ),
    });
    let mut batch = ScoreBatch::default();
    for (score, missing) in scored {
        if missing {
            batch.missing_responses.push(score.probe_id.clone());
        }
        batch.scores.push(score);
    }
    let known: std::collections::HashSet<&str> = specs.iter().map(|s| s.probe_id.as_str()).collect();
    let mut unknown: Vec<String> = responses
        .iter()
        .filter(|r| !known.contains(r.probe_id.as_str()))
        .map(|r| r.probe_id.clone())
        .collect();
    unknown.sort();
    unknown.dedup();
    batch.unknown_responses = unknown;
    batch
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub correct: usize,
    pub total: usize,
}

impl AccuracyCell {
    /// `100 · correct / total`; `None` for an empty cell.
    pub fn percentage(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub continents: BTreeMap<Continent, AccuracyCell>,
    pub world: AccuracyCell,
}

impl AccuracyTable {
    pub fn cell(&self, continent: Continent) -> AccuracyCell {
        self.continents.get(&continent).copied().unwrap_or_default()
    }
}

/// Per-continent share of correctly answered capitals, plus the World row.
pub fn aggregate_accuracy(scores: &[ProbeScore], g: &Gazetteer) -> Result<AccuracyTable> {
    let mut table = AccuracyTable::default();
    for s in scores {
        let continent = g
            .continent_of(s.expected_country_code)
            .ok_or_else(|| Error::UnknownCountry(s.expected_country_code.to_string()))?;
        let cell = table.continents.entry(continent).or_default();
        cell.total += 1;
        table.world.total += 1;
        if s.matched {
            cell.correct += 1;
            table.world.correct += 1;
        }
    }
    Ok(table)
}

/// Countries a masked model can never get right under the single-slot template.
pub fn masked_unreachable(specs: &[ProbeSpec], aliases: &AliasTable) -> Vec<CountryCode> {
    let mut out: Vec<CountryCode> = specs
        .iter()
        .map(|s| s.expected_country_code)
        .filter(|&c| !aliases.has_single_token_alias(c))
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<(u64, T)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let item = serde_json::from_str(&line).map_err(|e| Error::format(line_no, e.to_string()))?;
        out.push((line_no, item));
    }
    Ok(out)
}

pub fn read_specs<R: BufRead>(r: R) -> Result<Vec<ProbeSpec>> {
    Ok(read_jsonl(r)?.into_iter().map(|(_, s)| s).collect())
}

/// Response import: duplicate probe ids keep the last record; each
/// duplicate yields one warning.
pub fn read_responses<R: BufRead>(r: R) -> Result<(Vec<ProbeResponse>, Vec<String>)> {
    let mut order: Vec<String> = Vec::new();
    let mut latest: HashMap<String, ProbeResponse> = HashMap::new();
    let mut warnings = Vec::new();
    for (line, resp) in read_jsonl::<ProbeResponse, _>(r)? {
        if latest.contains_key(&resp.probe_id) {
            let msg = format!(
                "line {line}: duplicate response for `{}`, keeping the last one",
                resp.probe_id
            );
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            order.push(resp.probe_id.clone());
        }
        latest.insert(resp.probe_id.clone(), resp);
    }
    let responses = order.into_iter().filter_map(|id| latest.remove(&id)).collect();
    Ok((responses, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::{load_gazetteer, LoadOptions};

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn spec(family: ProbeFamily, city: &str, code: &str) -> ProbeSpec {
        ProbeSpec {
            probe_id: format!("{}-1", family.as_str()),
            family,
            city_name: city.into(),
            expected_country_code: cc(code),
            rendered: Rendered::Masked(render_masked(city)),
        }
    }

    fn resp(id: &str, raw: &str) -> ProbeResponse {
        ProbeResponse {
            probe_id: id.into(),
            raw_answer: raw.into(),
        }
    }

    fn gazetteer() -> Gazetteer {
        let text = "Geoname ID;Name;ASCII Name;Feature Code;Country Code;Population;Coordinates\n\
            2988507;Paris;Paris;PPLC;FR;2138551;48.8566, 2.3522\n\
            2357048;Ouagadougou;Ouagadougou;PPLC;BF;1086505;12.36566, -1.53388\n\
            2950159;Berlin;Berlin;PPLC;DE;3426354;52.52437, 13.41053\n\
            2867714;Munich;Munich;PPL;DE;1260391;48.13743, 11.57549\n";
        load_gazetteer(text.as_bytes(), &LoadOptions::default()).unwrap().0
    }

    #[test]
    fn masked_template() {
        assert_eq!(render_masked("Paris"), "Paris is capital of <mask>");
    }

    #[test]
    fn chat_template_is_one_shot() {
        let msgs = render_chat("Ouagadougou");
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[0].role, "user");
        assert_eq!(
            msgs[0].content,
            "Name the country corresponding to its capital: Paris. Only give the country."
        );
        assert_eq!(msgs[1], ChatMessage::new("assistant", "France".into()));
        assert_eq!(
            msgs[2].content,
            "Name the country corresponding to its capital: Ouagadougou. Only give the country."
        );
    }

    #[test]
    fn generate_one_probe_per_capital() {
        let g = gazetteer();
        let probes = generate_probes(&g, ProbeFamily::Masked);
        let ids: Vec<_> = probes.iter().map(|p| p.probe_id.as_str()).collect();
        assert_eq!(ids, vec!["masked-2357048", "masked-2950159", "masked-2988507"]);
        for p in &probes {
            match &p.rendered {
                Rendered::Masked(s) => {
                    assert!(s.contains(&p.city_name));
                    assert!(s.ends_with("is capital of <mask>"));
                }
                Rendered::Chat(_) => panic!("wrong family"),
            }
        }
        assert_eq!(probes, generate_probes(&g, ProbeFamily::Masked));
        let chat = generate_probes(&g, ProbeFamily::Chat);
        assert!(chat.iter().all(|p| p.probe_id.starts_with("chat-")));
    }

    #[test]
    fn no_capitals_no_probes() {
        let text = "Geoname ID;Name;ASCII Name;Feature Code;Country Code;Population;Coordinates\n\
            1;Lyon;Lyon;PPL;FR;500000;45.75, 4.85\n";
        let g = load_gazetteer(text.as_bytes(), &LoadOptions::default()).unwrap().0;
        assert!(generate_probes(&g, ProbeFamily::Chat).is_empty());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_country_answer("  France."), "france");
        assert_eq!(normalize_country_answer("The Gambia"), "gambia");
        assert_eq!(normalize_country_answer("UNITED   STATES"), "united states");
        assert_eq!(normalize_country_answer("U.S.A."), "u.s.a");
        assert_eq!(normalize_country_answer("France!!\n"), "france");
        assert_eq!(normalize_country_answer(""), "");
    }

    #[test]
    fn scoring_examples() {
        let aliases = AliasTable::bundled();
        let fr = spec(ProbeFamily::Chat, "Paris", "FR");
        assert!(score_response(&fr, &resp("chat-1", "France"), aliases).unwrap().matched);
        assert!(!score_response(&fr, &resp("chat-1", "Paris"), aliases).unwrap().matched);
        let us = spec(ProbeFamily::Chat, "Washington", "US");
        assert!(score_response(&us, &resp("chat-1", "USA"), aliases).unwrap().matched);
        assert!(
            score_response(&us, &resp("chat-1", "The United States of America."), aliases)
                .unwrap()
                .matched
        );
        assert!(score_response(&fr, &resp("chat-2", "France"), aliases).is_err());
    }

    #[test]
    fn masked_fills_are_single_tokens() {
        let aliases = AliasTable::bundled();
        let fr = spec(ProbeFamily::Masked, "Paris", "FR");
        assert!(
            score_response(&fr, &resp("masked-1", "france"), aliases)
                .unwrap()
                .matched
        );
        assert!(
            score_response(&fr, &resp("masked-1", "Ġfrance"), aliases)
                .unwrap()
                .matched
        );
        let za = spec(ProbeFamily::Masked, "Pretoria", "ZA");
        assert!(
            !score_response(&za, &resp("masked-1", "south africa"), aliases)
                .unwrap()
                .matched
        );
        let specs = vec![za, fr];
        assert_eq!(masked_unreachable(&specs, aliases), vec![cc("ZA")]);
    }

    #[test]
    fn near_miss_congo_resolution() {
        let aliases = AliasTable::bundled();
        let cd = spec(ProbeFamily::Chat, "Kinshasa", "CD");
        let cg = spec(ProbeFamily::Chat, "Brazzaville", "CG");
        assert!(!score_response(&cd, &resp("chat-1", "Congo"), aliases).unwrap().matched);
        assert!(
            score_response(&cd, &resp("chat-1", "DR Congo"), aliases)
                .unwrap()
                .matched
        );
        assert!(
            score_response(&cg, &resp("chat-1", "Republic of the Congo"), aliases)
                .unwrap()
                .matched
        );
    }

    #[test]
    fn accuracy_percentages() {
        let g = gazetteer();
        let scores = vec![
            ProbeScore {
                probe_id: "a".into(),
                expected_country_code: cc("FR"),
                matched: true,
                normalized_answer: "france".into(),
            },
            ProbeScore {
                probe_id: "b".into(),
                expected_country_code: cc("DE"),
                matched: false,
                normalized_answer: "munich".into(),
            },
            ProbeScore {
                probe_id: "c".into(),
                expected_country_code: cc("BF"),
                matched: true,
                normalized_answer: "burkina faso".into(),
            },
        ];
        let t = aggregate_accuracy(&scores, &g).unwrap();
        assert_eq!(t.cell(Continent::Europe), AccuracyCell { correct: 1, total: 2 });
        assert_eq!(t.cell(Continent::Europe).percentage(), Some(50.0));
        assert_eq!(t.cell(Continent::Africa).percentage(), Some(100.0));
        assert_eq!(t.cell(Continent::Asia).percentage(), None);
        assert_eq!(t.world, AccuracyCell { correct: 2, total: 3 });

        let bad = vec![ProbeScore {
            probe_id: "x".into(),
            expected_country_code: cc("JP"),
            matched: true,
            normalized_answer: "japan".into(),
        }];
        assert!(aggregate_accuracy(&bad, &g).is_err());
    }

    #[test]
    fn paper_style_counts() {
        assert_eq!(AccuracyCell { correct: 37, total: 50 }.percentage(), Some(74.0));
        assert_eq!(AccuracyCell { correct: 18, total: 24 }.percentage(), Some(75.0));
    }

    #[test]
    fn duplicate_responses_last_wins() {
        let text = "{\"probe_id\":\"a\",\"raw_answer\":\"x\"}\n\n{\"probe_id\":\"b\",\"raw_answer\":\"y\"}\n{\"probe_id\":\"a\",\"raw_answer\":\"z\"}\n";
        let (resps, warnings) = read_responses(text.as_bytes()).unwrap();
        assert_eq!(resps, vec![resp("a", "z"), resp("b", "y")]);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].starts_with("line 4"));
    }

    #[test]
    fn malformed_jsonl_names_line() {
        let text = "{\"probe_id\":\"a\",\"raw_answer\":\"x\"}\n{oops\n";
        let err = read_responses(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn spec_jsonl_shape() {
        let g = gazetteer();
        let probes = generate_probes(&g, ProbeFamily::Chat);
        let mut buf = Vec::new();
        write_jsonl(&probes, &mut buf).unwrap();
        let first: serde_json::Value = serde_json::from_slice(buf.split(|&b| b == b'\n').next().unwrap()).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            vec!["city_name", "expected_country_code", "family", "probe_id", "rendered"]
        );
        assert_eq!(first["family"], "chat");
        assert_eq!(first["rendered"][2]["role"], "user");
        assert_eq!(read_specs(buf.as_slice()).unwrap(), probes);
    }

    #[test]
    fn score_all_tracks_missing_and_unknown() {
        let g = gazetteer();
        let specs = generate_probes(&g, ProbeFamily::Chat);
        let responses = vec![resp("chat-2988507", "France"), resp("chat-999", "Nowhere")];
        let batch = score_all(&specs, &responses, AliasTable::bundled(), Execution::Sequential);
        assert_eq!(batch.scores.len(), 3);
        assert_eq!(batch.missing_responses, vec!["chat-2357048", "chat-2950159"]);
        assert_eq!(batch.unknown_responses, vec!["chat-999"]);
        assert_eq!(batch.scores.iter().filter(|s| s.matched).count(), 1);
    }
}
