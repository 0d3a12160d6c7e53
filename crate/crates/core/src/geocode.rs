//! Offline gazetteer geocoding with a persistent key cache.
//!
//! Gazetteer file: tab-separated `place, region, postal_codes (comma list),
//! lat, lon[, county]`. Region file: `region, abbreviation, min_lat, min_lon,
//! max_lat, max_lon`. Cache file: `key<TAB>lat<TAB>lon<TAB>matched_place`, or
//! `key<TAB>-` for a cached miss; rows sorted by key, later rows win on load.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::config::{read_to_string, ConfigError};
use crate::schema::{CaseRecord, GeocodeMethod};
use crate::warning::{codes, Stage, Warning};

const NEGATIVE_MARKER: &str = "-";
const ZERO_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub place_name: String,
    pub admin_region: String,
    pub postal_codes: Vec<String>,
    pub lat: f64,
    pub lon: f64,
    pub county: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl RegionBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::trim).collect()))
}

fn parse_err(what: &str, line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        what: what.to_string(),
        line,
        message: message.into(),
    }
}

fn coord(s: &str, what: &str, line: usize, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| (lo..=hi).contains(v))
        .ok_or_else(|| parse_err(what, line, format!("bad coordinate {s:?}")))
}

/// Region names and abbreviations with their bounding boxes.
#[derive(Debug, Clone, Default)]
pub struct Regions {
    boxes: BTreeMap<String, RegionBox>,
    names: BTreeMap<String, String>,
}

impl Regions {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut regions = Regions::default();
        for (line, cols) in tsv_rows(text) {
            let [name, abbr, a, b, c, d] = cols[..] else {
                return Err(parse_err("regions", line, "expected 6 columns"));
            };
            let bx = RegionBox {
                min_lat: coord(a, "regions", line, -90.0, 90.0)?,
                min_lon: coord(b, "regions", line, -180.0, 180.0)?,
                max_lat: coord(c, "regions", line, -90.0, 90.0)?,
                max_lon: coord(d, "regions", line, -180.0, 180.0)?,
            };
            let canonical = normalize_words(name);
            regions.names.insert(canonical.clone(), canonical.clone());
            if !abbr.is_empty() {
                regions.names.insert(normalize_words(abbr), canonical.clone());
            }
            regions.boxes.insert(canonical, bx);
        }
        Ok(regions)
    }

    pub fn builtin() -> Self {
        Regions::from_text(crate::config::defaults::REGIONS).expect("bundled regions")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Regions::from_text(&read_to_string(path)?)
    }

    /// Canonical lowercase region name for a name or abbreviation.
    pub fn canonical(&self, region: &str) -> Option<&str> {
        self.names.get(&normalize_words(region)).map(String::as_str)
    }

    pub fn bounding_box(&self, region: &str) -> Option<&RegionBox> {
        self.canonical(region).and_then(|c| self.boxes.get(c))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
}

impl Gazetteer {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (line, cols) in tsv_rows(text) {
            if cols.len() != 5 && cols.len() != 6 {
                return Err(parse_err("gazetteer", line, "expected 5 or 6 columns"));
            }
            if cols[0].is_empty() || cols[1].is_empty() {
                return Err(parse_err("gazetteer", line, "empty place or region"));
            }
            entries.push(GazetteerEntry {
                place_name: cols[0].to_string(),
                admin_region: cols[1].to_string(),
                postal_codes: cols[2]
                    .split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(String::from)
                    .collect(),
                lat: coord(cols[3], "gazetteer", line, -90.0, 90.0)?,
                lon: coord(cols[4], "gazetteer", line, -180.0, 180.0)?,
                county: cols.get(5).filter(|c| !c.is_empty()).map(|c| c.to_string()),
            });
        }
        Ok(Gazetteer { entries })
    }

    pub fn builtin() -> Self {
        Gazetteer::from_text(crate::config::defaults::GAZETTEER).expect("bundled gazetteer")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Gazetteer::from_text(&read_to_string(path)?)
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }
}

fn normalize_words(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("empty place query")]
pub struct EmptyQuery;

/// Lowercases, treats punctuation as a part separator, splits numeric
/// tokens into their own parts, and joins parts with `|`.
pub fn normalize_place(raw: &str) -> Result<String, EmptyQuery> {
    let mut parts: Vec<String> = Vec::new();
    for chunk in raw.split(|c: char| !c.is_alphanumeric() && !c.is_whitespace()) {
        let mut words: Vec<String> = Vec::new();
        for token in chunk.split_whitespace() {
            let token = token.to_lowercase();
            if token.chars().all(|c| c.is_ascii_digit()) {
                if !words.is_empty() {
                    parts.push(words.join(" "));
                    words.clear();
                }
                parts.push(token);
            } else {
                words.push(token);
            }
        }
        if !words.is_empty() {
            parts.push(words.join(" "));
        }
    }
    if parts.is_empty() {
        return Err(EmptyQuery);
    }
    Ok(parts.join("|"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GeocodeQuery {
    pub normalized_key: String,
    pub bias_region: Option<String>,
}

impl GeocodeQuery {
    pub fn new(raw: &str, bias_region: Option<&str>) -> Result<Self, EmptyQuery> {
        Ok(GeocodeQuery {
            normalized_key: normalize_place(raw)?,
            bias_region: bias_region.map(normalize_words).filter(|b| !b.is_empty()),
        })
    }

    pub fn cache_key(&self) -> String {
        match &self.bias_region {
            Some(b) => format!("{}@{}", self.normalized_key, b),
            None => self.normalized_key.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeResult {
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub matched_place: Option<String>,
    pub cache_hit: bool,
    pub plausible: Option<bool>,
}

impl GeocodeResult {
    fn miss(cache_hit: bool) -> Self {
        GeocodeResult {
            lat: None,
            lon: None,
            matched_place: None,
            cache_hit,
            plausible: None,
        }
    }
}

type CachedValue = Option<(f64, f64, String)>;

/// Thread-safe key cache. Reads run concurrently; writes serialize.
#[derive(Debug, Default)]
pub struct GeocodeCache {
    map: RwLock<BTreeMap<String, CachedValue>>,
    path: Option<PathBuf>,
}

impl GeocodeCache {
    pub fn in_memory() -> Self {
        GeocodeCache::default()
    }

    /// Opens a file-backed cache; a missing file starts empty.
    pub fn open(path: &Path) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        if path.exists() {
            for (line, cols) in tsv_rows(&read_to_string(path)?) {
                let value = match cols[..] {
                    [_, m] if m == NEGATIVE_MARKER => None,
                    [_, lat, lon, place] => Some((
                        coord(lat, "geocode cache", line, -90.0, 90.0)?,
                        coord(lon, "geocode cache", line, -180.0, 180.0)?,
                        place.to_string(),
                    )),
                    _ => return Err(parse_err("geocode cache", line, "malformed row")),
                };
                map.insert(cols[0].to_string(), value);
            }
        }
        Ok(GeocodeCache {
            map: RwLock::new(map),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, key: &str) -> Option<CachedValue> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, key: String, value: CachedValue) {
        self.map.write().expect("cache lock").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        let map = self.map.read().expect("cache lock");
        let mut out = String::new();
        for (k, v) in map.iter() {
            match v {
                Some((lat, lon, place)) => out.push_str(&format!("{k}\t{lat}\t{lon}\t{place}\n")),
                None => out.push_str(&format!("{k}\t{NEGATIVE_MARKER}\n")),
            }
        }
        out
    }

    /// Rewrites the backing file via a temporary sibling and rename.
    pub fn save(&self) -> std::io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(self.to_text().as_bytes())?;
        f.sync_all()?;
        std::fs::rename(tmp, path)
    }
}

/// Gazetteer, region boxes, cache, and lookup/hit counters shared by both
/// extraction paths.
#[derive(Debug)]
pub struct Geocoder {
    pub gazetteer: Gazetteer,
    pub regions: Regions,
    pub cache: GeocodeCache,
    lookups: AtomicU64,
    hits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeocodeCounters {
    pub gazetteer_lookups: u64,
    pub cache_hits: u64,
}

impl Geocoder {
    pub fn new(gazetteer: Gazetteer, regions: Regions, cache: GeocodeCache) -> Self {
        Geocoder {
            gazetteer,
            regions,
            cache,
            lookups: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        }
    }

    pub fn builtin() -> Self {
        Geocoder::new(Gazetteer::builtin(), Regions::builtin(), GeocodeCache::in_memory())
    }

    pub fn counters(&self) -> GeocodeCounters {
        GeocodeCounters {
            gazetteer_lookups: self.lookups.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }

    /// Cache first; on a miss, postal code, then place+region, then place
    /// within the bias region, then a unique place name.
    pub fn geocode(&self, query: &GeocodeQuery) -> (GeocodeResult, Option<Warning>) {
        let key = query.cache_key();
        if let Some(cached) = self.cache.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return (to_result(cached, true), None);
        }
        self.lookups.fetch_add(1, Ordering::Relaxed);
        let (value, warning) = self.lookup(query);
        self.cache.put(key, value.clone());
        (to_result(value, false), warning)
    }

    fn lookup(&self, query: &GeocodeQuery) -> (CachedValue, Option<Warning>) {
        let parts: Vec<&str> = query.normalized_key.split('|').collect();
        let postal = parts
            .iter()
            .find(|p| p.len() == 5 && p.chars().all(|c| c.is_ascii_digit()));
        let words: Vec<&str> = parts
            .iter()
            .copied()
            .filter(|p| !p.chars().all(|c| c.is_ascii_digit()))
            .collect();
        let place = words.first().copied();
        let region = words.get(1).and_then(|r| self.regions.canonical(r));
        let bias = query.bias_region.as_deref().and_then(|b| self.regions.canonical(b));
        let entries = self.gazetteer.entries();
        let same_place = |e: &&GazetteerEntry| Some(normalize_words(&e.place_name).as_str()) == place;
        let in_region = |e: &&GazetteerEntry, r: &str| self.regions.canonical(&e.admin_region) == Some(r);

        let found: Vec<&GazetteerEntry> = if let Some(p) = postal {
            entries.iter().filter(|e| e.postal_codes.iter().any(|c| c == p)).collect()
        } else {
            Vec::new()
        };
        let found = if found.len() == 1 {
            found
        } else if let Some(r) = region.filter(|_| place.is_some()) {
            entries.iter().filter(same_place).filter(|e| in_region(e, r)).collect()
        } else {
            Vec::new()
        };
        let found = if found.len() == 1 {
            found
        } else if let Some(b) = bias.filter(|_| place.is_some()) {
            entries.iter().filter(same_place).filter(|e| in_region(e, b)).collect()
        } else {
            Vec::new()
        };
        let found = if found.len() == 1 || place.is_none() {
            found
        } else {
            entries.iter().filter(same_place).collect()
        };
        match found[..] {
            [e] => (
                Some((e.lat, e.lon, format!("{}, {}", e.place_name, e.admin_region))),
                None,
            ),
            [] => (
                None,
                Some(Warning::warn(
                    Stage::Geocode,
                    codes::NO_MATCH,
                    format!("no gazetteer match for {:?}", query.normalized_key),
                )),
            ),
            _ => (
                None,
                Some(Warning::warn(
                    Stage::Geocode,
                    codes::AMBIGUOUS_PLACE,
                    format!(
                        "{:?} matches {} places in different regions",
                        query.normalized_key,
                        found.len()
                    ),
                )),
            ),
        }
    }

    /// Fills coordinates, method, and plausibility on a record. Records with
    /// source-provided coordinates skip the lookup and only get a
    /// plausibility flag.
    pub fn geocode_record(&self, record: &mut CaseRecord) -> Vec<Warning> {
        let s = &mut record.spatial;
        let expected = s.state.clone();
        if s.geocode_method == GeocodeMethod::SourceProvided {
            s.geocode_plausible = match (s.lat, s.lon) {
                (Some(lat), Some(lon)) => Some(plausibility(lat, lon, expected.as_deref(), &self.regions)),
                _ => None,
            };
            return Vec::new();
        }
        if s.lat.is_some() || s.lon.is_some() {
            return Vec::new();
        }
        let raw = match (&s.city, &s.last_seen_location) {
            (Some(city), _) => {
                let mut q = city.clone();
                if let Some(st) = &s.state {
                    q.push_str(", ");
                    q.push_str(st);
                }
                if let Some(p) = &s.postal_code {
                    q.push(' ');
                    q.push_str(p);
                }
                q
            }
            (None, Some(loc)) => loc.clone(),
            (None, None) => return Vec::new(),
        };
        let query = match GeocodeQuery::new(&raw, s.state.as_deref()) {
            Ok(q) => q,
            Err(e) => return vec![Warning::warn(Stage::Geocode, codes::EMPTY_QUERY, e.to_string())],
        };
        let (result, warning) = self.geocode(&query);
        if let (Some(lat), Some(lon)) = (result.lat, result.lon) {
            s.lat = Some(lat);
            s.lon = Some(lon);
            s.geocode_method = GeocodeMethod::Gazetteer;
            s.geocode_plausible = Some(plausibility(lat, lon, expected.as_deref(), &self.regions));
        }
        warning.into_iter().collect()
    }
}

fn to_result(value: CachedValue, cache_hit: bool) -> GeocodeResult {
    match value {
        Some((lat, lon, place)) => GeocodeResult {
            lat: Some(lat),
            lon: Some(lon),
            matched_place: Some(place),
            cache_hit,
            plausible: None,
        },
        None => GeocodeResult::miss(cache_hit),
    }
}

/// Non-zero coordinates inside the expected region's box. An expected region
/// with no known box constrains nothing.
pub fn plausibility(lat: f64, lon: f64, expected_region: Option<&str>, regions: &Regions) -> bool {
    if lat.abs() < ZERO_EPS && lon.abs() < ZERO_EPS {
        return false;
    }
    match expected_region.and_then(|r| regions.bounding_box(r)) {
        Some(b) => b.contains(lat, lon),
        None => true,
    }
}

/// Plausibility of a result: `None` when it has no coordinates.
pub fn result_plausibility(result: &GeocodeResult, expected_region: Option<&str>, regions: &Regions) -> Option<bool> {
    match (result.lat, result.lon) {
        (Some(lat), Some(lon)) => Some(plausibility(lat, lon, expected_region, regions)),
        _ => None,
    }
}
