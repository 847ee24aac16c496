//! A small US-geography knowledge base, its FunQL schema and executor.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ExecError};
use crate::scorer::Lexicon;
use crate::types::{ConstantSpec, DomainSchema, ParamSpec, Program, SchemaFile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub name: String,
    pub capital: String,
    pub population: i64,
    /// Square miles.
    pub area: i64,
    pub borders: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub name: String,
    pub state: String,
    pub population: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiverRecord {
    pub name: String,
    /// Miles.
    pub length: i64,
    pub traverses: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceRecord {
    pub name: String,
    pub state: String,
    /// Feet.
    pub elevation: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeoKb {
    pub states: Vec<StateRecord>,
    pub cities: Vec<CityRecord>,
    pub rivers: Vec<RiverRecord>,
    pub places: Vec<PlaceRecord>,
}

const STATES: &[(&str, &str, i64, i64, &[&str])] = &[
    ("new york", "albany", 20_201_249, 54_555, &["vermont", "massachusetts", "connecticut", "new jersey", "pennsylvania"]),
    ("vermont", "montpelier", 643_077, 9_616, &["new york", "massachusetts"]),
    ("massachusetts", "boston", 7_029_917, 10_554, &["new york", "vermont", "connecticut"]),
    ("connecticut", "hartford", 3_605_944, 5_543, &["new york", "massachusetts"]),
    ("new jersey", "trenton", 9_288_994, 8_723, &["new york", "pennsylvania"]),
    ("pennsylvania", "harrisburg", 13_002_700, 46_054, &["new york", "new jersey"]),
    ("utah", "salt lake city", 3_271_616, 84_897, &["colorado"]),
    ("colorado", "denver", 5_773_714, 104_094, &["utah"]),
    ("texas", "austin", 29_145_505, 268_596, &[]),
    ("alaska", "juneau", 733_391, 665_384, &[]),
];

const CITIES: &[(&str, &str, i64)] = &[
    ("albany", "new york", 99_224),
    ("new york city", "new york", 8_804_190),
    ("buffalo", "new york", 278_349),
    ("montpelier", "vermont", 8_074),
    ("burlington", "vermont", 44_743),
    ("boston", "massachusetts", 675_647),
    ("springfield", "massachusetts", 155_929),
    ("hartford", "connecticut", 121_054),
    ("new haven", "connecticut", 134_023),
    ("trenton", "new jersey", 90_871),
    ("newark", "new jersey", 311_549),
    ("harrisburg", "pennsylvania", 50_099),
    ("philadelphia", "pennsylvania", 1_603_797),
    ("pittsburgh", "pennsylvania", 302_971),
    ("salt lake city", "utah", 199_723),
    ("provo", "utah", 115_162),
    ("denver", "colorado", 715_522),
    ("colorado springs", "colorado", 478_961),
    ("austin", "texas", 961_855),
    ("houston", "texas", 2_304_580),
    ("dallas", "texas", 1_304_379),
    ("juneau", "alaska", 32_255),
    ("anchorage", "alaska", 291_247),
];

const RIVERS: &[(&str, i64, &[&str])] = &[
    ("hudson", 315, &["new york", "new jersey"]),
    ("mohawk", 149, &["new york"]),
    ("delaware", 301, &["new york", "pennsylvania", "new jersey"]),
    ("susquehanna", 444, &["new york", "pennsylvania"]),
    ("green", 730, &["colorado", "utah"]),
    ("rio grande", 1_896, &["colorado", "texas"]),
    ("yukon", 1_980, &["alaska"]),
];

const PLACES: &[(&str, &str, i64)] = &[
    ("mount mckinley", "alaska", 20_310),
    ("mount marcy", "new york", 5_344),
    ("mount mansfield", "vermont", 4_393),
    ("mount davis", "pennsylvania", 3_213),
    ("kings peak", "utah", 13_528),
    ("mount elbert", "colorado", 14_440),
    ("guadalupe peak", "texas", 8_751),
];

impl GeoKb {
    /// The knowledge base shipped with the crate: ten states with their
    /// capitals, major cities, rivers and high points.
    pub fn bundled() -> GeoKb {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        GeoKb {
            states: STATES
                .iter()
                .map(|&(name, capital, population, area, borders)| StateRecord {
                    name: name.into(),
                    capital: capital.into(),
                    population,
                    area,
                    borders: set(borders),
                })
                .collect(),
            cities: CITIES
                .iter()
                .map(|&(name, state, population)| CityRecord { name: name.into(), state: state.into(), population })
                .collect(),
            rivers: RIVERS
                .iter()
                .map(|&(name, length, traverses)| RiverRecord { name: name.into(), length, traverses: set(traverses) })
                .collect(),
            places: PLACES
                .iter()
                .map(|&(name, state, elevation)| PlaceRecord { name: name.into(), state: state.into(), elevation })
                .collect(),
        }
    }

    /// Checks symmetric borders, positive measures and dangling references.
    pub fn validate(&self) -> Result<(), Error> {
        let states: BTreeMap<&str, &StateRecord> = self.states.iter().map(|s| (s.name.as_str(), s)).collect();
        let bad = |msg: String| Err(Error::Data(msg));
        for s in &self.states {
            if s.population <= 0 || s.area <= 0 {
                return bad(format!("state `{}` has a non-positive measure", s.name));
            }
            for b in &s.borders {
                match states.get(b.as_str()) {
                    Some(other) if other.borders.contains(&s.name) => {}
                    _ => return bad(format!("border {} / {b} is not symmetric", s.name)),
                }
            }
        }
        for c in &self.cities {
            if c.population <= 0 || !states.contains_key(c.state.as_str()) {
                return bad(format!("bad city record `{}`", c.name));
            }
        }
        for r in &self.rivers {
            if r.length <= 0 || r.traverses.iter().any(|s| !states.contains_key(s.as_str())) {
                return bad(format!("bad river record `{}`", r.name));
            }
        }
        for p in &self.places {
            if !states.contains_key(p.state.as_str()) {
                return bad(format!("bad place record `{}`", p.name));
            }
        }
        Ok(())
    }

    fn state(&self, name: &str) -> Option<&StateRecord> {
        self.states.iter().find(|s| s.name == name)
    }

    fn city(&self, name: &str) -> Option<&CityRecord> {
        self.cities.iter().find(|c| c.name == name)
    }
}

impl DomainSchema {
    /// The FunQL subset over `kb`, with one entity constant per KB record.
    pub fn geo(kb: &GeoKb) -> DomainSchema {
        DomainSchema::from_file(geo_schema_file(kb)).expect("built-in Geo schema is valid")
    }
}

pub fn geo_schema_file(kb: &GeoKb) -> SchemaFile {
    use ParamSpec as P;
    let pred = ConstantSpec::predicate;
    let mut constants = vec![
        pred("capital", vec![P::required("city")], "city"),
        pred("loc_1", vec![P::required("any")], "state"),
        pred("loc_2", vec![P::required("state")], "city"),
        pred("next_to_1", vec![P::required("state")], "state"),
        pred("next_to_2", vec![P::required("state")], "state"),
        pred("state", vec![P::required("state")], "state"),
        pred("city", vec![P::required("city")], "city"),
        pred("river", vec![P::required("river")], "river"),
        pred("largest", vec![P::required("any")], "any"),
        pred("smallest", vec![P::required("any")], "any"),
        pred("largest_one", vec![P::required("num")], "any"),
        pred("smallest_one", vec![P::required("num")], "any"),
        pred("pop_1", vec![P::required("any")], "num"),
        pred("area_1", vec![P::required("any")], "num"),
        pred("count", vec![P::required("any")], "num"),
        ConstantSpec::entity("all", "all", "all"),
    ];
    let entity = |kind: &str, name: &str, ty: &str| ConstantSpec::entity(&format!("{kind}('{name}')"), ty, name);
    constants.extend(kb.states.iter().map(|s| entity("stateid", &s.name, "state")));
    constants.extend(kb.cities.iter().map(|c| entity("cityid", &c.name, "city")));
    constants.extend(kb.rivers.iter().map(|r| entity("riverid", &r.name, "river")));
    constants.extend(kb.places.iter().map(|p| entity("placeid", &p.name, "place")));
    let types = ["state", "city", "place", "river", "num", "any", "all"];
    let mut subtypes = Vec::new();
    for t in ["state", "city", "place", "river"] {
        subtypes.push(["all".to_string(), t.to_string()]);
        subtypes.push([t.to_string(), "any".to_string()]);
    }
    SchemaFile {
        types: types.iter().map(|t| t.to_string()).collect(),
        subtypes,
        default_argument: Some("all".into()),
        constants,
    }
}

/// Hand-written phrases for the Geo predicates (at most two each).
pub fn geo_manual_lexicon(schema: &DomainSchema) -> Lexicon {
    let mut lex = Lexicon::default();
    let pairs = [
        ("capital", "capital"),
        ("capitals", "capital"),
        ("of", "loc_2"),
        ("in", "loc_2"),
        ("where", "loc_1"),
        ("border", "next_to_1"),
        ("borders", "next_to_1"),
        ("state", "state"),
        ("states", "state"),
        ("city", "city"),
        ("cities", "city"),
        ("river", "river"),
        ("rivers", "river"),
        ("largest", "largest"),
        ("biggest", "largest"),
        ("smallest", "smallest"),
        ("most", "largest_one"),
        ("least", "smallest_one"),
        ("people", "pop_1"),
        ("population", "pop_1"),
        ("area", "area_1"),
        ("how many", "count"),
    ];
    for (phrase, name) in pairs {
        lex.insert(phrase, schema.lookup(name).expect("Geo constant"));
    }
    lex
}

/// A FunQL value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    State(String),
    City(String),
    River(String),
    Place(String),
    Num(i64),
}

pub type ValueSet = BTreeSet<Value>;

/// Evaluates a Geo program with set semantics.
pub fn exec_funql(z: &Program, schema: &DomainSchema, kb: &GeoKb) -> Result<ValueSet, ExecError> {
    let head = schema.constant(z.head);
    let name = head.name.as_str();
    if let Some(open) = name.find("('") {
        let payload = &name[open + 2..name.len() - 2];
        let v = match &name[..open] {
            "stateid" => kb.state(payload).map(|s| Value::State(s.name.clone())),
            "cityid" => kb.city(payload).map(|c| Value::City(c.name.clone())),
            "riverid" => kb.rivers.iter().find(|r| r.name == payload).map(|r| Value::River(r.name.clone())),
            "placeid" => kb.places.iter().find(|p| p.name == payload).map(|p| Value::Place(p.name.clone())),
            _ => None,
        };
        return v.map(|v| BTreeSet::from([v])).ok_or_else(|| ExecError::UnknownEntity(name.into()));
    }
    if name == "all" {
        return Ok(universe(kb));
    }
    let arg = match z.args.as_slice() {
        [Some(a)] => a,
        _ => return Err(ExecError::Unsaturated(z.display(schema).to_string())),
    };
    if matches!(name, "largest_one" | "smallest_one") {
        return superlative_one(name == "largest_one", arg, schema, kb);
    }
    let xs = exec_funql(arg, schema, kb)?;
    let out: ValueSet = match name {
        "state" => xs.into_iter().filter(|v| matches!(v, Value::State(_))).collect(),
        "city" => xs.into_iter().filter(|v| matches!(v, Value::City(_))).collect(),
        "river" => xs.into_iter().filter(|v| matches!(v, Value::River(_))).collect(),
        "capital" => xs
            .into_iter()
            .filter_map(|v| match v {
                Value::City(c) if kb.states.iter().any(|s| s.capital == c) => Some(Value::City(c)),
                Value::State(s) => kb.state(&s).map(|s| Value::City(s.capital.clone())),
                _ => None,
            })
            .collect(),
        "loc_2" => kb
            .cities
            .iter()
            .filter(|c| xs.contains(&Value::State(c.state.clone())))
            .map(|c| Value::City(c.name.clone()))
            .collect(),
        "loc_1" => xs.iter().flat_map(|v| containing_states(v, kb)).map(Value::State).collect(),
        "next_to_1" | "next_to_2" => xs
            .iter()
            .filter_map(|v| match v {
                Value::State(s) => kb.state(s),
                _ => None,
            })
            .flat_map(|s| s.borders.iter().cloned().map(Value::State))
            .collect(),
        "largest" | "smallest" => {
            let sized: Vec<(i64, Value)> = xs.into_iter().filter_map(|v| size_of(&v, kb).map(|n| (n, v))).collect();
            extreme(sized, name == "largest")
        }
        "pop_1" => xs.iter().filter_map(|v| population(v, kb)).map(Value::Num).collect(),
        "area_1" => xs.iter().filter_map(|v| area(v, kb)).map(Value::Num).collect(),
        "count" => BTreeSet::from([Value::Num(xs.len() as i64)]),
        other => return Err(ExecError::Unsupported(other.into())),
    };
    Ok(out)
}

/// `largest_one(pop_1(S))` is the element of `S` with the largest population.
fn superlative_one(largest: bool, arg: &Program, schema: &DomainSchema, kb: &GeoKb) -> Result<ValueSet, ExecError> {
    let measure = schema.constant(arg.head).name.as_str();
    let inner = match (measure, arg.args.as_slice()) {
        ("pop_1" | "area_1", [Some(inner)]) => inner,
        _ => return Err(ExecError::Unsupported(arg.display(schema).to_string())),
    };
    let xs = exec_funql(inner, schema, kb)?;
    let sized: Vec<(i64, Value)> = xs
        .into_iter()
        .filter_map(|v| {
            let m = if measure == "pop_1" { population(&v, kb) } else { area(&v, kb) };
            m.map(|m| (m, v))
        })
        .collect();
    Ok(extreme(sized, largest))
}

fn extreme(sized: Vec<(i64, Value)>, largest: bool) -> ValueSet {
    let best = if largest {
        sized.iter().map(|(n, _)| *n).max()
    } else {
        sized.iter().map(|(n, _)| *n).min()
    };
    sized.into_iter().filter(|(n, _)| Some(*n) == best).map(|(_, v)| v).collect()
}

fn universe(kb: &GeoKb) -> ValueSet {
    let mut out = ValueSet::new();
    out.extend(kb.states.iter().map(|s| Value::State(s.name.clone())));
    out.extend(kb.cities.iter().map(|c| Value::City(c.name.clone())));
    out.extend(kb.rivers.iter().map(|r| Value::River(r.name.clone())));
    out.extend(kb.places.iter().map(|p| Value::Place(p.name.clone())));
    out
}

fn containing_states(v: &Value, kb: &GeoKb) -> Vec<String> {
    match v {
        Value::City(c) => kb.city(c).map(|c| vec![c.state.clone()]).unwrap_or_default(),
        Value::River(r) => kb
            .rivers
            .iter()
            .find(|x| &x.name == r)
            .map(|x| x.traverses.iter().cloned().collect())
            .unwrap_or_default(),
        Value::Place(p) => kb
            .places
            .iter()
            .find(|x| &x.name == p)
            .map(|x| vec![x.state.clone()])
            .unwrap_or_default(),
        Value::State(_) | Value::Num(_) => Vec::new(),
    }
}

fn population(v: &Value, kb: &GeoKb) -> Option<i64> {
    match v {
        Value::State(s) => kb.state(s).map(|s| s.population),
        Value::City(c) => kb.city(c).map(|c| c.population),
        _ => None,
    }
}

fn area(v: &Value, kb: &GeoKb) -> Option<i64> {
    match v {
        Value::State(s) => kb.state(s).map(|s| s.area),
        _ => None,
    }
}

/// Size used by `largest`/`smallest`: area, population, length or elevation.
fn size_of(v: &Value, kb: &GeoKb) -> Option<i64> {
    match v {
        Value::State(_) => area(v, kb),
        Value::City(_) => population(v, kb),
        Value::River(r) => kb.rivers.iter().find(|x| &x.name == r).map(|x| x.length),
        Value::Place(p) => kb.places.iter().find(|x| &x.name == p).map(|x| x.elevation),
        Value::Num(_) => None,
    }
}

/// A question template: `{S}`, `{C}`, `{R}` and `{P}` are filled with a state,
/// city, river or place, consistently in the utterance and the program.
const TEMPLATES: &[(&str, &str)] = &[
    ("what is the capital of {S} ?", "capital(loc_2({S}))"),
    ("what states border {S} ?", "state(next_to_1({S}))"),
    ("what is the capital of states that {S} borders ?", "capital(loc_2(state(next_to_1({S}))))"),
    ("how many states border {S} ?", "count(state(next_to_1({S})))"),
    ("how many people live in {S} ?", "pop_1({S})"),
    ("what is the population of {C} ?", "pop_1({C})"),
    ("what is the area of {S} ?", "area_1({S})"),
    ("what cities are in {S} ?", "city(loc_2({S}))"),
    ("what is the largest city in {S} ?", "largest(city(loc_2({S})))"),
    ("where is {C} ?", "loc_1({C})"),
    ("where is {P} ?", "loc_1({P})"),
    ("where is the {R} ?", "loc_1({R})"),
    ("what is the population of the largest state that borders {S} ?", "pop_1(largest(state(next_to_1({S}))))"),
    ("state that has the most people ?", "largest_one(pop_1(state(all)))"),
    ("which state has the least people ?", "smallest_one(pop_1(state(all)))"),
    ("what is the largest state ?", "largest(state(all))"),
    ("what is the smallest state ?", "smallest(state(all))"),
    ("what is the longest river ?", "largest(river(all))"),
    ("how many rivers are there ?", "count(river(all))"),
    ("what is the capital of the state with the most people ?", "capital(loc_2(largest_one(pop_1(state(all)))))"),
];

/// A Geo question with its program and execution result.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoItem {
    pub utterance: String,
    pub program: String,
    pub denotation: ValueSet,
}

/// Instantiates every template with every matching entity, shuffled under
/// `seed`. Programs that do not type-check under `schema` are dropped.
pub fn generate_geo(kb: &GeoKb, seed: u64) -> Vec<GeoItem> {
    let schema = DomainSchema::geo(kb);
    let mut items = Vec::new();
    for &(utt, prog) in TEMPLATES {
        let (slot, fillers): (&str, Vec<(String, String)>) = if utt.contains("{S}") {
            ("{S}", kb.states.iter().map(|s| (s.name.clone(), format!("stateid('{}')", s.name))).collect())
        } else if utt.contains("{C}") {
            ("{C}", kb.cities.iter().map(|c| (c.name.clone(), format!("cityid('{}')", c.name))).collect())
        } else if utt.contains("{R}") {
            ("{R}", kb.rivers.iter().map(|r| (r.name.clone(), format!("riverid('{}')", r.name))).collect())
        } else if utt.contains("{P}") {
            ("{P}", kb.places.iter().map(|p| (p.name.clone(), format!("placeid('{}')", p.name))).collect())
        } else {
            ("", vec![(String::new(), String::new())])
        };
        for (phrase, entity) in fillers {
            let (u, p) = if slot.is_empty() {
                (utt.to_string(), prog.to_string())
            } else {
                (utt.replace(slot, &phrase), prog.replace(slot, &entity))
            };
            let Ok(z) = schema.parse_program(&p) else { continue };
            let Ok(denotation) = exec_funql(&z, &schema, kb) else { continue };
            items.push(GeoItem { utterance: u, program: z.display(&schema).to_string(), denotation });
        }
    }
    items.shuffle(&mut StdRng::seed_from_u64(seed));
    items
}
