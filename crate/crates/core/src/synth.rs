//! Seeded synthetic case documents in three layout families, each carrying
//! its gold record in a trailer after the end-of-document sentinel.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geocode::{Gazetteer, GazetteerEntry};
use crate::schema::{CaseRecord, GeocodeMethod, Sex, SourceFamily};
use crate::text::END_OF_DOCUMENT_SENTINEL;

const MARKER_OPEN: &str = "<!-- gold ";
const MARKER_CLOSE: &str = " -->";
const TIMEZONE: &str = "America/New_York";

const FIRST_F: [&str; 12] = [
    "Avery", "Brynn", "Carla", "Dana", "Elise", "Faith", "Gwen", "Hallie", "Ines", "Joelle", "Kira", "Lena",
];
const FIRST_M: [&str; 12] = [
    "Aaron", "Blake", "Caleb", "Dorian", "Emmett", "Felix", "Grady", "Hugo", "Ivan", "Jonah", "Kellan", "Luis",
];
const LAST: [&str; 16] = [
    "Ashford", "Brantley", "Colfax", "Dunmore", "Ellery", "Fairbanks", "Galloway", "Hartwell", "Ingram",
    "Jessup", "Kettering", "Lindqvist", "Marchetti", "Northcott", "Oakes", "Pruitt",
];
const RACES: [&str; 5] = ["White", "Black", "Hispanic", "Asian", "Native American"];
const CLOTHING: [&str; 6] = [
    "gray hooded sweatshirt and blue jeans",
    "black puffer jacket and sweatpants",
    "red flannel shirt and khaki shorts",
    "green raincoat and dark leggings",
    "white t-shirt and black athletic pants",
    "navy windbreaker and work boots",
];
const FEATURES: [&str; 6] = [
    "small scar above the left eyebrow",
    "tattoo of a star on the right wrist",
    "pierced ears and braces",
    "freckles across the nose",
    "birthmark on the back of the neck",
    "wears prescription glasses",
];
const SETTINGS: [&str; 6] = [
    "leaving a friend's residence",
    "walking near a convenience store",
    "at a bus stop downtown",
    "departing the family home",
    "outside a shopping plaza",
    "near a public library",
];
const FOLLOWUPS: [&str; 5] = [
    "Family members have not heard from them since.",
    "A phone associated with the case has been turned off.",
    "No activity has been recorded on known accounts.",
    "Investigators consider the disappearance out of character.",
    "A bag of belongings was left behind.",
];

/// Corpus knobs. `dropout_by_family` overrides `label_dropout_rate` for the
/// listed families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub seed: u64,
    pub count_per_family: BTreeMap<SourceFamily, usize>,
    pub narrative_cue_rate: f64,
    pub label_dropout_rate: f64,
    #[serde(default)]
    pub dropout_by_family: BTreeMap<SourceFamily, f64>,
}

impl SynthesisSpec {
    pub fn uniform(seed: u64, per_family: usize) -> Self {
        SynthesisSpec {
            seed,
            count_per_family: SourceFamily::KNOWN.iter().map(|f| (*f, per_family)).collect(),
            narrative_cue_rate: 0.5,
            label_dropout_rate: 0.0,
            dropout_by_family: BTreeMap::new(),
        }
    }

    pub fn dropout_for(&self, family: SourceFamily) -> f64 {
        self.dropout_by_family.get(&family).copied().unwrap_or(self.label_dropout_rate)
    }

    pub fn check(&self) -> Result<(), String> {
        let rates = std::iter::once(self.narrative_cue_rate)
            .chain(std::iter::once(self.label_dropout_rate))
            .chain(self.dropout_by_family.values().copied());
        for r in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("rate {r} outside [0, 1]"));
            }
        }
        if self.count_per_family.contains_key(&SourceFamily::Unknown) {
            return Err("cannot synthesize the unknown family".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub document_id: String,
    pub family: SourceFamily,
    pub gold: CaseRecord,
    pub document_text: String,
    pub oracle_marker: String,
}

impl SynthCase {
    /// Document text followed by the sentinel and the gold trailer.
    pub fn file_text(&self) -> String {
        format!("{}\n{END_OF_DOCUMENT_SENTINEL}\n{}\n", self.document_text, self.oracle_marker)
    }
}

pub fn oracle_marker(gold: &CaseRecord) -> String {
    format!(
        "{MARKER_OPEN}{}{MARKER_CLOSE}",
        serde_json::to_string(gold).expect("case record serializes")
    )
}

/// Gold records from trailer lines after the sentinel. Documents without a
/// trailer yield nothing.
pub fn parse_oracle_markers(raw: &str) -> Vec<CaseRecord> {
    let Some(pos) = raw.find(END_OF_DOCUMENT_SENTINEL) else {
        return Vec::new();
    };
    raw[pos..]
        .lines()
        .filter_map(|l| l.trim().strip_prefix(MARKER_OPEN)?.strip_suffix(MARKER_CLOSE))
        .filter_map(|j| serde_json::from_str(j).ok())
        .collect()
}

/// The facts of one case before rendering.
#[derive(Debug, Clone)]
struct Facts {
    case_id: String,
    name: String,
    female: bool,
    age: i64,
    height_in: (i64, i64),
    weight_lb: (i64, i64),
    race: &'static str,
    place: GazetteerEntry,
    county: String,
    last_seen: NaiveDate,
    reported: NaiveDate,
    clothing: &'static str,
    features: &'static str,
    circumstances: String,
    cues: Vec<String>,
}

impl Facts {
    fn pronoun(&self) -> &'static str {
        if self.female {
            "She"
        } else {
            "He"
        }
    }

    fn location(&self, with_postal: bool) -> String {
        let postal = self.place.postal_codes.first().filter(|_| with_postal);
        match postal {
            Some(p) => format!("{}, {} {p}", self.place.place_name, self.place.admin_region),
            None => format!("{}, {}", self.place.place_name, self.place.admin_region),
        }
    }
}

fn half_up(num: i64, den: i64) -> i64 {
    (num + den / 2) / den
}

fn inches_to_cm(i: i64) -> i64 {
    half_up(i * 254, 100)
}

fn pounds_to_kg(lb: i64) -> i64 {
    half_up(lb * 45_359_237, 100_000_000)
}

fn feet_inches(i: i64) -> String {
    format!("{}'{}\"", i / 12, i % 12)
}

fn draw_facts(rng: &mut ChaCha8Rng, case_id: String, places: &[GazetteerEntry], cue_rate: f64) -> Facts {
    let female = rng.gen_bool(0.5);
    let first = if female { FIRST_F.choose(rng) } else { FIRST_M.choose(rng) }.expect("non-empty");
    let name = format!("{first} {}", LAST.choose(rng).expect("non-empty"));
    let h = rng.gen_range(58..=74);
    let w = rng.gen_range(95..=240);
    let ranged = rng.gen_bool(0.4);
    let place = places.choose(rng).expect("gazetteer is not empty").clone();
    let last_seen = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date") + Duration::days(rng.gen_range(0..2000));
    let reported = last_seen + Duration::days(rng.gen_range(0..10));
    let setting = SETTINGS.choose(rng).expect("non-empty");
    let followup = FOLLOWUPS.choose(rng).expect("non-empty");
    let mut circumstances = format!(
        "{name} was last seen {setting} in {} on {}. {followup}",
        place.place_name,
        last_seen.format("%B %-d, %Y")
    );
    let mut cues = Vec::new();
    if rng.gen_bool(cue_rate) {
        let n = rng.gen_range(1..=2);
        let mut others: Vec<&str> = places
            .iter()
            .map(|p| p.place_name.as_str())
            .filter(|p| *p != place.place_name)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        others.shuffle(rng);
        cues = others.iter().take(n).map(|p| p.to_string()).collect();
        let pronoun = if female { "She" } else { "He" };
        write!(circumstances, " {pronoun} is believed to be en route to {}.", cues.join(" or ")).expect("write to string");
    }
    Facts {
        case_id,
        name,
        female,
        age: rng.gen_range(12..=70),
        height_in: if ranged { (h, h + 2) } else { (h, h) },
        weight_lb: if ranged { (w, w + 20) } else { (w, w) },
        race: RACES.choose(rng).expect("non-empty"),
        county: place.county.clone().unwrap_or_else(|| format!("{} County", place.place_name)),
        place,
        last_seen,
        reported,
        clothing: CLOTHING.choose(rng).expect("non-empty"),
        features: FEATURES.choose(rng).expect("non-empty"),
        circumstances,
        cues,
    }
}

/// Label slots that dropout may remove; circumstances and the case id are
/// never dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Name,
    Sex,
    Age,
    Height,
    Weight,
    Race,
    LastSeen,
    Reported,
    Location,
    Clothing,
    Features,
}

const SLOTS: [Slot; 11] = [
    Slot::Name,
    Slot::Sex,
    Slot::Age,
    Slot::Height,
    Slot::Weight,
    Slot::Race,
    Slot::LastSeen,
    Slot::Reported,
    Slot::Location,
    Slot::Clothing,
    Slot::Features,
];

struct Rendered {
    kept: Vec<Slot>,
    jitter: Vec<bool>,
}

impl Rendered {
    fn has(&self, s: Slot) -> bool {
        self.kept.contains(&s)
    }

    /// `Label: value`, with extra spacing after the colon on jittered lines.
    fn label(&self, out: &mut String, slot: Slot, label: &str, value: &str) {
        if self.has(slot) {
            let pad = if self.jitter[slot as usize] { "   " } else { " " };
            let trail = if self.jitter[slot as usize] { "  " } else { "" };
            writeln!(out, "{label}:{pad}{value}{trail}").expect("write to string");
        }
    }
}

fn height_text(f: &Facts, family: SourceFamily) -> String {
    let (a, b) = f.height_in;
    if a == b || family == SourceFamily::Bulletin {
        feet_inches(a)
    } else {
        format!("{} - {}", feet_inches(a), feet_inches(b))
    }
}

fn weight_text(f: &Facts, family: SourceFamily, unit: &str) -> String {
    let (a, b) = f.weight_lb;
    if a == b || family == SourceFamily::Bulletin {
        format!("{a} {unit}")
    } else {
        format!("{a} - {b} {unit}")
    }
}

/// Prose restating facts whose labels were dropped.
fn restate(f: &Facts, r: &Rendered, family: SourceFamily) -> String {
    let p = f.pronoun();
    let mut s: Vec<String> = Vec::new();
    for slot in SLOTS.iter().filter(|s| !r.has(**s)) {
        let line = match slot {
            Slot::Name => format!("The subject's name is {}.", f.name),
            Slot::Sex => format!("The subject is {}.", if f.female { "female" } else { "male" }),
            Slot::Age => format!("{p} was {} years old at the time.", f.age),
            Slot::Height => format!("{p} stands about {}.", height_text(f, family)),
            Slot::Weight => format!("{p} weighs about {}.", weight_text(f, family, "pounds")),
            Slot::Race => format!("{p} is described as {}.", f.race),
            Slot::LastSeen => format!("{p} was last seen on {}.", f.last_seen.format("%B %-d, %Y")),
            Slot::Reported if family == SourceFamily::NarrativeProfile => continue,
            Slot::Reported => format!("The report was filed on {}.", f.reported.format("%B %-d, %Y")),
            Slot::Location => format!(
                "{p} was last known to be in {}.",
                f.location(family != SourceFamily::NarrativeProfile)
            ),
            Slot::Clothing => format!("{p} was wearing a {}.", f.clothing),
            Slot::Features => format!("Identifying marks: {}.", f.features),
        };
        s.push(line);
    }
    s.join(" ")
}

fn render_registry(f: &Facts, r: &Rendered) -> String {
    let mut o = String::new();
    writeln!(o, "NamUs {}\nMissing Person Case Report\n", f.case_id).expect("write to string");
    o.push_str("Case Information\n");
    writeln!(o, "Case Number: {}", f.case_id).expect("write to string");
    r.label(&mut o, Slot::Reported, "NamUs Case Created", &f.reported.format("%m/%d/%Y").to_string());
    r.label(&mut o, Slot::LastSeen, "Date of Last Contact", &f.last_seen.format("%m/%d/%Y").to_string());
    o.push_str("\nSubject Identification\n");
    r.label(&mut o, Slot::Name, "Name", &f.name);
    r.label(&mut o, Slot::Sex, "Biological Sex", if f.female { "Female" } else { "Male" });
    r.label(&mut o, Slot::Age, "Missing Age", &format!("{} Years Old", f.age));
    r.label(&mut o, Slot::Race, "Race / Ethnicity", f.race);
    o.push_str("\nPhysical Description\n");
    r.label(&mut o, Slot::Height, "Height", &height_text(f, SourceFamily::RegistryForm));
    r.label(&mut o, Slot::Weight, "Weight", &weight_text(f, SourceFamily::RegistryForm, "lbs"));
    r.label(&mut o, Slot::Clothing, "Clothing", f.clothing);
    r.label(&mut o, Slot::Features, "Distinctive Features", f.features);
    if r.has(Slot::Location) {
        writeln!(o, "\nLast Known Location\n{}\n{}", f.location(true), f.county).expect("write to string");
    }
    writeln!(o, "\nCircumstances of Disappearance\n{}", f.circumstances).expect("write to string");
    let extra = restate(f, r, SourceFamily::RegistryForm);
    if !extra.is_empty() {
        writeln!(o, "\nAdditional Notes\n{extra}").expect("write to string");
    }
    o
}

fn render_bulletin(f: &Facts, r: &Rendered) -> String {
    let mut o = String::new();
    writeln!(o, "{} STATE POLICE\nMISSING PERSON BULLETIN\n", f.place.admin_region.to_uppercase()).expect("write to string");
    r.label(&mut o, Slot::Name, "MISSING", &f.name);
    writeln!(o, "CASE #: {}", f.case_id).expect("write to string");
    r.label(&mut o, Slot::Sex, "SEX", if f.female { "F" } else { "M" });
    r.label(&mut o, Slot::Age, "AGE", &f.age.to_string());
    r.label(&mut o, Slot::Race, "RACE", f.race);
    r.label(&mut o, Slot::Height, "HEIGHT", &height_text(f, SourceFamily::Bulletin));
    r.label(&mut o, Slot::Weight, "WEIGHT", &weight_text(f, SourceFamily::Bulletin, "lbs"));
    r.label(&mut o, Slot::LastSeen, "LAST SEEN", &f.last_seen.format("%B %-d, %Y").to_string());
    r.label(&mut o, Slot::Reported, "REPORTED", &f.reported.format("%m/%d/%Y").to_string());
    r.label(&mut o, Slot::Location, "LOCATION", &f.location(true));
    r.label(&mut o, Slot::Clothing, "CLOTHING", f.clothing);
    r.label(&mut o, Slot::Features, "FEATURES", f.features);
    writeln!(o, "DETAILS: {}", f.circumstances).expect("write to string");
    let extra = restate(f, r, SourceFamily::Bulletin);
    if !extra.is_empty() {
        writeln!(o, "\n{extra}").expect("write to string");
    }
    o.push_str("\nIF YOU HAVE ANY INFORMATION, CONTACT YOUR LOCAL LAW ENFORCEMENT AGENCY.\n");
    o
}

fn render_narrative(f: &Facts, r: &Rendered) -> String {
    let mut o = String::new();
    if r.has(Slot::Name) {
        writeln!(o, "{}", f.name).expect("write to string");
    }
    o.push_str("Vital Statistics\n");
    r.label(&mut o, Slot::LastSeen, "Missing Since", &f.last_seen.format("%b %-d, %Y").to_string());
    r.label(&mut o, Slot::Location, "Missing From", &f.location(false));
    r.label(&mut o, Slot::Sex, "Sex", if f.female { "Female" } else { "Male" });
    r.label(&mut o, Slot::Race, "Race", f.race);
    r.label(&mut o, Slot::Age, "Age", &format!("{} years old", f.age));
    let h = height_text(f, SourceFamily::NarrativeProfile);
    let w = weight_text(f, SourceFamily::NarrativeProfile, "pounds");
    if r.has(Slot::Height) && r.has(Slot::Weight) && !h.contains(',') {
        r.label(&mut o, Slot::Height, "Height and Weight", &format!("{h}, {w}"));
    } else {
        r.label(&mut o, Slot::Height, "Height", &h);
        r.label(&mut o, Slot::Weight, "Weight", &w);
    }
    r.label(&mut o, Slot::Clothing, "Clothing/Jewelry Description", f.clothing);
    r.label(&mut o, Slot::Features, "Distinguishing Characteristics", f.features);
    writeln!(o, "\nDetails of Disappearance\n{}", f.circumstances).expect("write to string");
    let extra = restate(f, r, SourceFamily::NarrativeProfile);
    if !extra.is_empty() {
        writeln!(o, "\n{extra}").expect("write to string");
    }
    writeln!(
        o,
        "\nInvestigating Agency\n{} Sheriff's Office\nCase Number: {}",
        f.county, f.case_id
    )
    .expect("write to string");
    o
}

fn source_label(family: SourceFamily) -> &'static str {
    match family {
        SourceFamily::RegistryForm => "namus_registry",
        SourceFamily::Bulletin => "state_police_bulletin",
        SourceFamily::NarrativeProfile | SourceFamily::Unknown => "osint_case_profile",
    }
}

/// The record an ideal extraction of the rendered document yields.
fn gold_record(f: &Facts, family: SourceFamily, document_id: &str) -> CaseRecord {
    let mut g = CaseRecord::empty(&f.case_id);
    let d = &mut g.demographic;
    d.name = Some(f.name.clone());
    d.sex = if f.female { Sex::Female } else { Sex::Male };
    d.age_years = Some(f.age);
    d.height_min_cm = Some(inches_to_cm(f.height_in.0));
    d.height_max_cm = Some(inches_to_cm(if family == SourceFamily::Bulletin { f.height_in.0 } else { f.height_in.1 }));
    d.weight_min_kg = Some(pounds_to_kg(f.weight_lb.0));
    d.weight_max_kg = Some(pounds_to_kg(if family == SourceFamily::Bulletin { f.weight_lb.0 } else { f.weight_lb.1 }));
    d.race_ethnicity = Some(f.race.to_string());
    let narrative = family == SourceFamily::NarrativeProfile;
    let s = &mut g.spatial;
    s.last_seen_location = Some(f.location(!narrative));
    s.city = Some(f.place.place_name.clone());
    s.state = Some(f.place.admin_region.clone());
    s.postal_code = if narrative { None } else { f.place.postal_codes.first().cloned() };
    s.county = (family == SourceFamily::RegistryForm).then(|| f.county.clone());
    s.lat = Some(f.place.lat);
    s.lon = Some(f.place.lon);
    s.geocode_method = GeocodeMethod::Gazetteer;
    s.geocode_plausible = Some(true);
    g.temporal.last_seen_ts = Some(f.last_seen.format("%Y-%m-%d").to_string());
    g.temporal.reported_missing_ts = (!narrative).then(|| f.reported.format("%Y-%m-%d").to_string());
    g.temporal.timezone = Some(TIMEZONE.into());
    g.narrative_osint.circumstances = Some(f.circumstances.clone());
    g.narrative_osint.clothing_description = Some(f.clothing.to_string());
    g.narrative_osint.distinctive_features = Some(f.features.to_string());
    g.narrative_osint.movement_cues = f.cues.clone();
    g.provenance.source_label = source_label(family).into();
    g.provenance.source_family = family;
    g.provenance.document_id = document_id.into();
    g
}

fn case_id(family: SourceFamily, rng: &mut ChaCha8Rng, index: usize) -> String {
    let n: u32 = rng.gen_range(1000..10000);
    match family {
        SourceFamily::RegistryForm => format!("MP{n}{index:03}"),
        SourceFamily::Bulletin => format!("SP-{n}-{index:03}"),
        _ => format!("OC{n}-{index:03}"),
    }
}

/// Renders one case in `family` layout. `dropout` is the per-label removal
/// probability.
fn render_case(
    rng: &mut ChaCha8Rng,
    family: SourceFamily,
    index: usize,
    spec: &SynthesisSpec,
    places: &[GazetteerEntry],
) -> SynthCase {
    let document_id = format!("{}_{index:03}", family.as_str());
    let id = case_id(family, rng, index);
    let facts = draw_facts(rng, id, places, spec.narrative_cue_rate);
    let p = spec.dropout_for(family);
    let kept = SLOTS.iter().copied().filter(|_| !rng.gen_bool(p)).collect();
    let jitter = SLOTS.iter().map(|_| rng.gen_bool(0.2)).collect();
    let r = Rendered { kept, jitter };
    let mut text = match family {
        SourceFamily::RegistryForm => render_registry(&facts, &r),
        SourceFamily::Bulletin => render_bulletin(&facts, &r),
        _ => render_narrative(&facts, &r),
    };
    if rng.gen_bool(0.2) {
        text = text.replace('\n', "\r\n");
    }
    let gold = gold_record(&facts, family, &document_id);
    SynthCase {
        oracle_marker: oracle_marker(&gold),
        document_id,
        family,
        gold,
        document_text: text.trim_end().to_string(),
    }
}

/// Deterministic corpus: identical specs give byte-identical output.
pub fn synthesize(spec: &SynthesisSpec) -> Vec<SynthCase> {
    let gazetteer = Gazetteer::builtin();
    let places = gazetteer.entries();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for (family, count) in &spec.count_per_family {
        for i in 0..*count {
            out.push(render_case(&mut rng, *family, i, spec, places));
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct ManifestRow<'a> {
    document_id: &'a str,
    case_id: &'a str,
    family: SourceFamily,
    seed: u64,
    narrative_cue_rate: f64,
    label_dropout_rate: f64,
}

/// Writes `<document_id>.txt` files, `gold.jsonl` sorted by case id, and
/// `manifest.jsonl`.
pub fn write_corpus(dir: &Path, cases: &[SynthCase], spec: &SynthesisSpec) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for c in cases {
        std::fs::write(dir.join(format!("{}.txt", c.document_id)), c.file_text())?;
    }
    let mut gold: Vec<CaseRecord> = cases.iter().map(|c| c.gold.clone()).collect();
    crate::emit::sort_records(&mut gold);
    std::fs::write(dir.join("gold.jsonl"), crate::emit::to_jsonl(&gold))?;
    let mut manifest = String::new();
    for c in cases {
        let row = ManifestRow {
            document_id: &c.document_id,
            case_id: &c.gold.case_id,
            family: c.family,
            seed: spec.seed,
            narrative_cue_rate: spec.narrative_cue_rate,
            label_dropout_rate: spec.dropout_for(c.family),
        };
        manifest.push_str(&serde_json::to_string(&row).expect("manifest row serializes"));
        manifest.push('\n');
    }
    std::fs::write(dir.join("manifest.jsonl"), manifest)
}
