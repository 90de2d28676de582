//! Conditional mixed-type design spaces and their unit-hypercube encoding.
//!
//! A [`DesignSpace`] is an ordered list of hyperparameters (continuous,
//! integer, ordinal, categorical) plus conditional-activation edges: a child
//! hyperparameter is active only while its parent takes one of a designated
//! set of values. Spaces are immutable after [`DesignSpace::build`] and safe
//! to share across threads.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bandwidth-free marker used in error details.
const EPS: f64 = 1e-12;

/// A native hyperparameter value. Inactive entries are represented as
/// `Option::None` wherever configurations are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Equality with numeric coercion: `Int(3)` matches `Float(3.0)`.
    pub fn loosely_eq(&self, other: &ParamValue) -> bool {
        match (self, other) {
            (ParamValue::Text(a), ParamValue::Text(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

/// The type-specific part of a hyperparameter definition.
#[derive(Clone, Debug, PartialEq)]
pub enum HpKind {
    Continuous { lower: f64, upper: f64, log_scale: bool },
    Integer { lower: i64, upper: i64, log_scale: bool },
    Ordinal { choices: Vec<String> },
    Categorical { choices: Vec<String> },
}

impl HpKind {
    pub fn is_numeric(&self) -> bool {
        matches!(self, HpKind::Continuous { .. } | HpKind::Integer { .. })
    }

    pub fn choices(&self) -> Option<&[String]> {
        match self {
            HpKind::Ordinal { choices } | HpKind::Categorical { choices } => Some(choices),
            _ => None,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            HpKind::Continuous { .. } => "continuous",
            HpKind::Integer { .. } => "integer",
            HpKind::Ordinal { .. } => "ordinal",
            HpKind::Categorical { .. } => "categorical",
        }
    }
}

/// One dimension of the search domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameter {
    pub name: String,
    pub kind: HpKind,
    pub default: ParamValue,
}

impl Hyperparameter {
    pub fn continuous(name: &str, lower: f64, upper: f64, log_scale: bool, default: f64) -> Self {
        Hyperparameter {
            name: name.to_string(),
            kind: HpKind::Continuous { lower, upper, log_scale },
            default: ParamValue::Float(default),
        }
    }

    pub fn integer(name: &str, lower: i64, upper: i64, log_scale: bool, default: i64) -> Self {
        Hyperparameter {
            name: name.to_string(),
            kind: HpKind::Integer { lower, upper, log_scale },
            default: ParamValue::Int(default),
        }
    }

    pub fn categorical(name: &str, choices: &[&str], default: &str) -> Self {
        Hyperparameter {
            name: name.to_string(),
            kind: HpKind::Categorical { choices: choices.iter().map(|c| c.to_string()).collect() },
            default: ParamValue::Text(default.to_string()),
        }
    }

    pub fn ordinal(name: &str, choices: &[&str], default: &str) -> Self {
        Hyperparameter {
            name: name.to_string(),
            kind: HpKind::Ordinal { choices: choices.iter().map(|c| c.to_string()).collect() },
            default: ParamValue::Text(default.to_string()),
        }
    }
}

/// Conditional activation: `child` is active iff `parent` is active and its
/// value is one of `activating_values`. At most one condition per child.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub child: String,
    pub parent: String,
    pub activating_values: Vec<ParamValue>,
}

impl Condition {
    pub fn new(child: &str, parent: &str, values: Vec<ParamValue>) -> Self {
        Condition { child: child.to_string(), parent: parent.to_string(), activating_values: values }
    }
}

#[derive(Clone, Debug)]
struct CondLink {
    parent: usize,
    activating: Vec<ParamValue>,
}

/// Errors raised when building, encoding, or decoding against a space.
#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("DuplicateName: hyperparameter '{0}' declared more than once")]
    DuplicateName(String),
    #[error("CycleInConditions: conditional dependencies do not form a forest (near '{0}')")]
    CycleInConditions(String),
    #[error("UnknownParentOrChild: condition references unknown hyperparameter '{0}'")]
    UnknownParentOrChild(String),
    #[error("DuplicateCondition: hyperparameter '{0}' has more than one condition")]
    DuplicateCondition(String),
    #[error("IllegalBounds: {0}")]
    IllegalBounds(String),
    #[error("IllegalChoices: {0}")]
    IllegalChoices(String),
    #[error("IllegalDefault: {0}")]
    IllegalDefault(String),
    #[error("IllegalActivatingValue: {0}")]
    IllegalActivatingValue(String),
    #[error("ValueOutOfBounds: {0}")]
    ValueOutOfBounds(String),
    #[error("WrongDimension: expected {expected} components, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("ComponentOutOfRange: component {index} is {value}, must lie in [0,1]")]
    ComponentOutOfRange { index: usize, value: f64 },
    #[error("UnknownHyperparameter: '{0}'")]
    UnknownHyperparameter(String),
    #[error("SchemaError: {0}")]
    Schema(String),
}

/// A single validity violation reported by [`DesignSpace::check_validity`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Activity { name: String, detail: String },
    Bound { name: String, detail: String },
    Choice { name: String, detail: String },
    Type { name: String, detail: String },
    Dimension { expected: usize, got: usize },
}

impl Violation {
    pub fn hyperparameter(&self) -> Option<&str> {
        match self {
            Violation::Activity { name, .. }
            | Violation::Bound { name, .. }
            | Violation::Choice { name, .. }
            | Violation::Type { name, .. } => Some(name),
            Violation::Dimension { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Activity { name, detail } => write!(f, "ActivityViolation on '{name}': {detail}"),
            Violation::Bound { name, detail } => write!(f, "BoundViolation on '{name}': {detail}"),
            Violation::Choice { name, detail } => write!(f, "ChoiceViolation on '{name}': {detail}"),
            Violation::Type { name, detail } => write!(f, "TypeViolation on '{name}': {detail}"),
            Violation::Dimension { expected, got } => {
                write!(f, "DimensionViolation: expected {expected} values, got {got}")
            }
        }
    }
}

/// One assignment of the design space: a native value per hyperparameter,
/// with `None` marking inactive entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    values: Vec<Option<ParamValue>>,
}

impl Configuration {
    /// Builds a configuration from raw per-hyperparameter values without
    /// validation. Use [`DesignSpace::check_validity`] afterwards.
    pub fn from_raw_values(values: Vec<Option<ParamValue>>) -> Self {
        Configuration { values }
    }

    pub fn values(&self) -> &[Option<ParamValue>] {
        &self.values
    }

    pub fn value(&self, index: usize) -> Option<&ParamValue> {
        self.values.get(index).and_then(|v| v.as_ref())
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.value(index).is_some()
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_some()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A validated conditional design space.
#[derive(Clone, Debug)]
pub struct DesignSpace {
    hyperparameters: Vec<Hyperparameter>,
    conditions: Vec<Condition>,
    index: HashMap<String, usize>,
    links: Vec<Option<CondLink>>,
    topo_order: Vec<usize>,
}

impl DesignSpace {
    /// Validates hyperparameters and conditions and returns the space.
    /// Hyperparameters are kept in declaration order.
    pub fn build(
        hyperparameters: Vec<Hyperparameter>,
        conditions: Vec<Condition>,
    ) -> Result<Self, SpaceError> {
        let mut index = HashMap::new();
        for (i, hp) in hyperparameters.iter().enumerate() {
            if index.insert(hp.name.clone(), i).is_some() {
                return Err(SpaceError::DuplicateName(hp.name.clone()));
            }
        }

        let mut hyperparameters = hyperparameters;
        for hp in &mut hyperparameters {
            validate_hyperparameter(hp)?;
        }

        let mut links: Vec<Option<CondLink>> = vec![None; hyperparameters.len()];
        for cond in &conditions {
            let child = *index
                .get(&cond.child)
                .ok_or_else(|| SpaceError::UnknownParentOrChild(cond.child.clone()))?;
            let parent = *index
                .get(&cond.parent)
                .ok_or_else(|| SpaceError::UnknownParentOrChild(cond.parent.clone()))?;
            if child == parent {
                return Err(SpaceError::CycleInConditions(cond.child.clone()));
            }
            if links[child].is_some() {
                return Err(SpaceError::DuplicateCondition(cond.child.clone()));
            }
            if cond.activating_values.is_empty() {
                return Err(SpaceError::IllegalActivatingValue(format!(
                    "condition on '{}' has an empty activating set",
                    cond.child
                )));
            }
            for v in &cond.activating_values {
                if !value_is_legal(&hyperparameters[parent].kind, v) {
                    return Err(SpaceError::IllegalActivatingValue(format!(
                        "value {v} is not legal for parent '{}'",
                        cond.parent
                    )));
                }
            }
            links[child] = Some(CondLink { parent, activating: cond.activating_values.clone() });
        }

        let topo_order = topological_order(&hyperparameters, &links)?;

        Ok(DesignSpace { hyperparameters, conditions, index, links, topo_order })
    }

    /// Number of hyperparameters, the dimension `d` of the unit encoding.
    pub fn len(&self) -> usize {
        self.hyperparameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperparameters.is_empty()
    }

    pub fn hyperparameters(&self) -> &[Hyperparameter] {
        &self.hyperparameters
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn name_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Parent index and activating values of `child`'s condition, if any.
    pub fn condition_on(&self, child: usize) -> Option<(usize, &[ParamValue])> {
        self.links[child].as_ref().map(|l| (l.parent, l.activating.as_slice()))
    }

    /// Samples a configuration uniformly in native space: uniformly in
    /// log-space for log-scaled dimensions, uniformly over choices for
    /// categorical/ordinal, uniform integers for integer kind. Conditional
    /// children are only sampled while active; inactive entries stay unset.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut values: Vec<Option<ParamValue>> = vec![None; self.len()];
        for &i in &self.topo_order {
            if !self.link_active(i, &values) {
                continue;
            }
            let u: f64 = rng.random();
            values[i] = Some(self.decode_dim(i, u));
        }
        Configuration { values }
    }

    /// The declared default for every hyperparameter, with activity
    /// recomputed from the conditions.
    pub fn default_configuration(&self) -> Configuration {
        let mut values: Vec<Option<ParamValue>> = vec![None; self.len()];
        for &i in &self.topo_order {
            if self.link_active(i, &values) {
                values[i] = Some(self.hyperparameters[i].default.clone());
            }
        }
        Configuration { values }
    }

    /// Builds a configuration from `(name, value)` pairs. Unnamed
    /// hyperparameters take their defaults; activity is recomputed and
    /// inactive entries are cleared.
    pub fn configuration_from_pairs(
        &self,
        pairs: &[(&str, ParamValue)],
    ) -> Result<Configuration, SpaceError> {
        let mut values: Vec<Option<ParamValue>> =
            self.hyperparameters.iter().map(|hp| Some(hp.default.clone())).collect();
        for (name, value) in pairs {
            let i = self
                .name_index(name)
                .ok_or_else(|| SpaceError::UnknownHyperparameter(name.to_string()))?;
            values[i] = Some(value.clone());
        }
        for &i in &self.topo_order {
            if !self.link_active(i, &values) {
                values[i] = None;
            }
        }
        let config = Configuration { values };
        if let Some(v) = self.check_validity(&config).into_iter().next() {
            return Err(SpaceError::ValueOutOfBounds(v.to_string()));
        }
        Ok(config)
    }

    /// Encodes a configuration into `[0,1]^d` plus its activity mask.
    /// Inactive entries are imputed with the default value's encoding so
    /// downstream models always receive finite, fixed-dimensional vectors.
    pub fn to_unit_vector(&self, config: &Configuration) -> Result<(Vec<f64>, Vec<bool>), SpaceError> {
        if config.len() != self.len() {
            return Err(SpaceError::WrongDimension { expected: self.len(), got: config.len() });
        }
        let mut vector = Vec::with_capacity(self.len());
        let mut mask = Vec::with_capacity(self.len());
        for (i, value) in config.values().iter().enumerate() {
            match value {
                Some(v) => {
                    vector.push(self.encode_dim(i, v)?);
                    mask.push(true);
                }
                None => {
                    let default = self.hyperparameters[i].default.clone();
                    vector.push(self.encode_dim(i, &default)?);
                    mask.push(false);
                }
            }
        }
        Ok((vector, mask))
    }

    /// Decodes a unit vector into a configuration. Activity is recomputed
    /// from the decoded parent values; children decoded as inactive are
    /// cleared regardless of their vector entry.
    pub fn from_unit_vector(&self, vector: &[f64]) -> Result<Configuration, SpaceError> {
        if vector.len() != self.len() {
            return Err(SpaceError::WrongDimension { expected: self.len(), got: vector.len() });
        }
        for (i, &v) in vector.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(SpaceError::ComponentOutOfRange { index: i, value: v });
            }
        }
        let mut values: Vec<Option<ParamValue>> = vec![None; self.len()];
        for &i in &self.topo_order {
            if self.link_active(i, &values) {
                values[i] = Some(self.decode_dim(i, vector[i]));
            }
        }
        Ok(Configuration { values })
    }

    /// Returns every invariant violation of `config`; an empty list means
    /// the configuration is valid for this space.
    pub fn check_validity(&self, config: &Configuration) -> Vec<Violation> {
        if config.len() != self.len() {
            return vec![Violation::Dimension { expected: self.len(), got: config.len() }];
        }
        let mut violations = Vec::new();
        let mut expected_active = vec![false; self.len()];
        for &i in &self.topo_order {
            expected_active[i] = match &self.links[i] {
                None => true,
                Some(link) => {
                    expected_active[link.parent]
                        && config
                            .value(link.parent)
                            .map(|v| link.activating.iter().any(|a| a.loosely_eq(v)))
                            .unwrap_or(false)
                }
            };
        }
        for i in 0..self.len() {
            let hp = &self.hyperparameters[i];
            match (config.value(i), expected_active[i]) {
                (Some(_), false) => violations.push(Violation::Activity {
                    name: hp.name.clone(),
                    detail: "carries a value while its condition deactivates it".to_string(),
                }),
                (None, true) => violations.push(Violation::Activity {
                    name: hp.name.clone(),
                    detail: "marked inactive while its condition activates it".to_string(),
                }),
                (Some(v), true) => self.check_value(i, v, &mut violations),
                (None, false) => {}
            }
        }
        violations
    }

    fn check_value(&self, i: usize, value: &ParamValue, out: &mut Vec<Violation>) {
        let hp = &self.hyperparameters[i];
        match &hp.kind {
            HpKind::Continuous { lower, upper, .. } => match value.as_f64() {
                None => out.push(Violation::Type {
                    name: hp.name.clone(),
                    detail: format!("expected a number, got '{value}'"),
                }),
                Some(v) if v < *lower || v > *upper || v.is_nan() => out.push(Violation::Bound {
                    name: hp.name.clone(),
                    detail: format!("{v} outside [{lower}, {upper}]"),
                }),
                _ => {}
            },
            HpKind::Integer { lower, upper, .. } => match value {
                ParamValue::Int(v) if v < lower || v > upper => out.push(Violation::Bound {
                    name: hp.name.clone(),
                    detail: format!("{v} outside [{lower}, {upper}]"),
                }),
                ParamValue::Int(_) => {}
                other => out.push(Violation::Type {
                    name: hp.name.clone(),
                    detail: format!("expected an integer, got '{other}'"),
                }),
            },
            HpKind::Ordinal { choices } | HpKind::Categorical { choices } => match value.as_str() {
                None => out.push(Violation::Type {
                    name: hp.name.clone(),
                    detail: format!("expected a choice label, got '{value}'"),
                }),
                Some(s) if !choices.iter().any(|c| c == s) => out.push(Violation::Choice {
                    name: hp.name.clone(),
                    detail: format!("'{s}' is not one of the declared choices"),
                }),
                _ => {}
            },
        }
    }

    fn link_active(&self, i: usize, values: &[Option<ParamValue>]) -> bool {
        match &self.links[i] {
            None => true,
            Some(link) => values[link.parent]
                .as_ref()
                .map(|v| link.activating.iter().any(|a| a.loosely_eq(v)))
                .unwrap_or(false),
        }
    }

    /// Unit encoding of one native value. Continuous values map linearly
    /// (in log space when log-scaled), integers through the half-open
    /// `[lower-0.5, upper+0.5]` relaxation, choices to bin centers
    /// `(index+0.5)/k`.
    pub fn encode_dim(&self, i: usize, value: &ParamValue) -> Result<f64, SpaceError> {
        let hp = &self.hyperparameters[i];
        let fail = |detail: String| SpaceError::ValueOutOfBounds(format!("'{}': {detail}", hp.name));
        match &hp.kind {
            HpKind::Continuous { lower, upper, log_scale } => {
                let v = value
                    .as_f64()
                    .ok_or_else(|| fail(format!("expected a number, got '{value}'")))?;
                if v < *lower - EPS || v > *upper + EPS || v.is_nan() {
                    return Err(fail(format!("{v} outside [{lower}, {upper}]")));
                }
                Ok(unit_of(v.clamp(*lower, *upper), *lower, *upper, *log_scale))
            }
            HpKind::Integer { lower, upper, log_scale } => {
                let v = match value {
                    ParamValue::Int(v) => *v,
                    other => return Err(fail(format!("expected an integer, got '{other}'"))),
                };
                if v < *lower || v > *upper {
                    return Err(fail(format!("{v} outside [{lower}, {upper}]")));
                }
                Ok(unit_of(v as f64, *lower as f64 - 0.5, *upper as f64 + 0.5, *log_scale))
            }
            HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
                let s = value
                    .as_str()
                    .ok_or_else(|| fail(format!("expected a choice label, got '{value}'")))?;
                let idx = choices
                    .iter()
                    .position(|c| c == s)
                    .ok_or_else(|| fail(format!("'{s}' is not a declared choice")))?;
                Ok((idx as f64 + 0.5) / choices.len() as f64)
            }
        }
    }

    /// Inverse of [`encode_dim`](Self::encode_dim) for a unit value in `[0,1]`.
    pub fn decode_dim(&self, i: usize, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.hyperparameters[i].kind {
            HpKind::Continuous { lower, upper, log_scale } => {
                ParamValue::Float(native_of(u, *lower, *upper, *log_scale).clamp(*lower, *upper))
            }
            HpKind::Integer { lower, upper, log_scale } => {
                let raw = native_of(u, *lower as f64 - 0.5, *upper as f64 + 0.5, *log_scale);
                ParamValue::Int((raw.round() as i64).clamp(*lower, *upper))
            }
            HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
                let k = choices.len();
                let idx = ((u * k as f64).floor() as usize).min(k - 1);
                ParamValue::Text(choices[idx].clone())
            }
        }
    }

    /// Category count for choice dimensions, `None` for numeric ones.
    pub fn category_count(&self, i: usize) -> Option<usize> {
        self.hyperparameters[i].kind.choices().map(|c| c.len())
    }

    /// Serializes configuration values as an ordered `name -> value|null` map.
    pub fn config_value_map(&self, config: &Configuration) -> serde_json::Map<String, serde_json::Value> {
        let mut map = serde_json::Map::new();
        for (hp, value) in self.hyperparameters.iter().zip(config.values()) {
            let json = match value {
                None => serde_json::Value::Null,
                Some(v) => serde_json::to_value(v).expect("ParamValue serializes"),
            };
            map.insert(hp.name.clone(), json);
        }
        map
    }
}

fn unit_of(v: f64, lower: f64, upper: f64, log_scale: bool) -> f64 {
    let u = if log_scale {
        (v.ln() - lower.ln()) / (upper.ln() - lower.ln())
    } else {
        (v - lower) / (upper - lower)
    };
    u.clamp(0.0, 1.0)
}

fn native_of(u: f64, lower: f64, upper: f64, log_scale: bool) -> f64 {
    if log_scale {
        (lower.ln() + u * (upper.ln() - lower.ln())).exp()
    } else {
        lower + u * (upper - lower)
    }
}

fn value_is_legal(kind: &HpKind, value: &ParamValue) -> bool {
    match kind {
        HpKind::Continuous { lower, upper, .. } => {
            value.as_f64().is_some_and(|v| v >= *lower && v <= *upper)
        }
        HpKind::Integer { lower, upper, .. } => {
            matches!(value, ParamValue::Int(v) if v >= lower && v <= upper)
        }
        HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
            value.as_str().is_some_and(|s| choices.iter().any(|c| c == s))
        }
    }
}

fn validate_hyperparameter(hp: &mut Hyperparameter) -> Result<(), SpaceError> {
    match &hp.kind {
        HpKind::Continuous { lower, upper, log_scale } => {
            if !lower.is_finite() || !upper.is_finite() || lower >= upper {
                return Err(SpaceError::IllegalBounds(format!(
                    "'{}': continuous bounds must satisfy lower < upper, got [{lower}, {upper}]",
                    hp.name
                )));
            }
            if *log_scale && *lower <= 0.0 {
                return Err(SpaceError::IllegalBounds(format!(
                    "'{}': log scale requires lower > 0, got {lower}",
                    hp.name
                )));
            }
            // Coerce integral defaults to the canonical float representation.
            if let ParamValue::Int(i) = hp.default {
                hp.default = ParamValue::Float(i as f64);
            }
            let d = hp.default.as_f64().ok_or_else(|| {
                SpaceError::IllegalDefault(format!("'{}': default must be a number", hp.name))
            })?;
            if d < *lower || d > *upper || d.is_nan() {
                return Err(SpaceError::IllegalDefault(format!(
                    "'{}': default {d} outside [{lower}, {upper}]",
                    hp.name
                )));
            }
        }
        HpKind::Integer { lower, upper, log_scale } => {
            if lower > upper {
                return Err(SpaceError::IllegalBounds(format!(
                    "'{}': integer bounds must satisfy lower <= upper, got [{lower}, {upper}]",
                    hp.name
                )));
            }
            if *log_scale && *lower <= 0 {
                return Err(SpaceError::IllegalBounds(format!(
                    "'{}': log scale requires lower > 0, got {lower}",
                    hp.name
                )));
            }
            if let ParamValue::Float(f) = hp.default {
                if f.fract() == 0.0 && f.is_finite() {
                    hp.default = ParamValue::Int(f as i64);
                }
            }
            match hp.default {
                ParamValue::Int(d) if d >= *lower && d <= *upper => {}
                _ => {
                    return Err(SpaceError::IllegalDefault(format!(
                        "'{}': default must be an integer in [{lower}, {upper}]",
                        hp.name
                    )))
                }
            }
        }
        HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
            if choices.is_empty() {
                return Err(SpaceError::IllegalChoices(format!(
                    "'{}': choices must be non-empty",
                    hp.name
                )));
            }
            for (i, c) in choices.iter().enumerate() {
                if choices[..i].contains(c) {
                    return Err(SpaceError::IllegalChoices(format!(
                        "'{}': duplicate choice '{c}'",
                        hp.name
                    )));
                }
            }
            let ok = hp.default.as_str().is_some_and(|s| choices.iter().any(|c| c == s));
            if !ok {
                return Err(SpaceError::IllegalDefault(format!(
                    "'{}': default '{}' is not a declared choice",
                    hp.name, hp.default
                )));
            }
        }
    }
    Ok(())
}

/// Kahn's algorithm over child->parent links; ties broken by declaration
/// order so the result is stable.
fn topological_order(
    hps: &[Hyperparameter],
    links: &[Option<CondLink>],
) -> Result<Vec<usize>, SpaceError> {
    let n = hps.len();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut progressed = false;
        for i in 0..n {
            if placed[i] {
                continue;
            }
            let ready = match &links[i] {
                None => true,
                Some(link) => placed[link.parent],
            };
            if ready {
                placed[i] = true;
                order.push(i);
                progressed = true;
            }
        }
        if !progressed {
            let stuck = (0..n).find(|&i| !placed[i]).expect("unplaced node exists");
            return Err(SpaceError::CycleInConditions(hps[stuck].name.clone()));
        }
    }
    Ok(order)
}

// --- JSON schema -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceJson {
    hyperparameters: Vec<HpJson>,
    #[serde(default)]
    conditions: Vec<CondJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HpJson {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default: Option<ParamValue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CondJson {
    child: String,
    parent: String,
    values: Vec<ParamValue>,
}

impl DesignSpace {
    /// Parses the space definition JSON schema. Unknown keys are rejected.
    /// A missing `default` falls back to the midpoint of the sampling scale
    /// (first choice for categorical/ordinal).
    pub fn from_json_str(text: &str) -> Result<Self, SpaceError> {
        let raw: SpaceJson =
            serde_json::from_str(text).map_err(|e| SpaceError::Schema(e.to_string()))?;
        let mut hps = Vec::with_capacity(raw.hyperparameters.len());
        for h in raw.hyperparameters {
            hps.push(hp_from_json(h)?);
        }
        let conditions = raw
            .conditions
            .into_iter()
            .map(|c| Condition { child: c.child, parent: c.parent, activating_values: c.values })
            .collect();
        Self::build(hps, conditions)
    }

    /// Compact canonical serialization with all defaults materialized;
    /// the digest is computed over these bytes.
    pub fn to_canonical_json(&self) -> String {
        let hyperparameters = self
            .hyperparameters
            .iter()
            .map(|hp| match &hp.kind {
                HpKind::Continuous { lower, upper, log_scale } => HpJson {
                    name: hp.name.clone(),
                    kind: "continuous".to_string(),
                    lower: Some(*lower),
                    upper: Some(*upper),
                    log: Some(*log_scale),
                    choices: None,
                    default: Some(hp.default.clone()),
                },
                HpKind::Integer { lower, upper, log_scale } => HpJson {
                    name: hp.name.clone(),
                    kind: "integer".to_string(),
                    lower: Some(*lower as f64),
                    upper: Some(*upper as f64),
                    log: Some(*log_scale),
                    choices: None,
                    default: Some(hp.default.clone()),
                },
                HpKind::Ordinal { choices } | HpKind::Categorical { choices } => HpJson {
                    name: hp.name.clone(),
                    kind: hp.kind.type_name().to_string(),
                    lower: None,
                    upper: None,
                    log: None,
                    choices: Some(choices.clone()),
                    default: Some(hp.default.clone()),
                },
            })
            .collect();
        let conditions = self
            .conditions
            .iter()
            .map(|c| CondJson {
                child: c.child.clone(),
                parent: c.parent.clone(),
                values: c.activating_values.clone(),
            })
            .collect();
        serde_json::to_string(&SpaceJson { hyperparameters, conditions })
            .expect("space serializes")
    }

    /// Hex SHA-256 of the canonical space JSON.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}

fn hp_from_json(h: HpJson) -> Result<Hyperparameter, SpaceError> {
    let name = h.name;
    let kind = match h.kind.as_str() {
        "continuous" => {
            let lower = require_num(&name, "lower", h.lower)?;
            let upper = require_num(&name, "upper", h.upper)?;
            HpKind::Continuous { lower, upper, log_scale: h.log.unwrap_or(false) }
        }
        "integer" => {
            let lower = int_bound(&name, "lower", require_num(&name, "lower", h.lower)?)?;
            let upper = int_bound(&name, "upper", require_num(&name, "upper", h.upper)?)?;
            HpKind::Integer { lower, upper, log_scale: h.log.unwrap_or(false) }
        }
        "ordinal" => HpKind::Ordinal { choices: require_choices(&name, h.choices)? },
        "categorical" => HpKind::Categorical { choices: require_choices(&name, h.choices)? },
        other => {
            return Err(SpaceError::Schema(format!(
                "'{name}': unknown hyperparameter type '{other}'"
            )))
        }
    };
    let default = match h.default {
        Some(d) => d,
        None => fallback_default(&kind),
    };
    Ok(Hyperparameter { name, kind, default })
}

fn fallback_default(kind: &HpKind) -> ParamValue {
    match kind {
        HpKind::Continuous { lower, upper, log_scale } => {
            ParamValue::Float(native_of(0.5, *lower, *upper, *log_scale))
        }
        HpKind::Integer { lower, upper, log_scale } => {
            let raw = native_of(0.5, *lower as f64 - 0.5, *upper as f64 + 0.5, *log_scale);
            ParamValue::Int((raw.round() as i64).clamp(*lower, *upper))
        }
        HpKind::Ordinal { choices } | HpKind::Categorical { choices } => {
            ParamValue::Text(choices[0].clone())
        }
    }
}

fn require_num(name: &str, field: &str, v: Option<f64>) -> Result<f64, SpaceError> {
    v.ok_or_else(|| SpaceError::Schema(format!("'{name}': missing required field '{field}'")))
}

fn int_bound(name: &str, field: &str, v: f64) -> Result<i64, SpaceError> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(SpaceError::Schema(format!(
            "'{name}': integer bound '{field}' must be integral, got {v}"
        )));
    }
    Ok(v as i64)
}

fn require_choices(name: &str, v: Option<Vec<String>>) -> Result<Vec<String>, SpaceError> {
    v.ok_or_else(|| SpaceError::Schema(format!("'{name}': missing required field 'choices'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rbf_space() -> DesignSpace {
        DesignSpace::build(
            vec![
                Hyperparameter::categorical("kernel", &["rbf", "linear"], "rbf"),
                Hyperparameter::continuous("gamma", 1e-5, 1e1, true, 1e-2),
            ],
            vec![Condition::new("gamma", "kernel", vec!["rbf".into()])],
        )
        .unwrap()
    }

    #[test]
    fn builds_minimal_space() {
        let space = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 0.0, 1.0, false, 0.5)],
            vec![],
        )
        .unwrap();
        assert_eq!(space.len(), 1);
    }

    #[test]
    fn rejects_two_cycle() {
        let err = DesignSpace::build(
            vec![
                Hyperparameter::categorical("a", &["on", "off"], "on"),
                Hyperparameter::categorical("b", &["on", "off"], "on"),
            ],
            vec![
                Condition::new("a", "b", vec!["on".into()]),
                Condition::new("b", "a", vec!["on".into()]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::CycleInConditions(_)));
    }

    #[test]
    fn builds_conditional_kernel_space() {
        let space = rbf_space();
        assert_eq!(space.len(), 2);
        assert_eq!(space.conditions().len(), 1);
    }

    #[test]
    fn rejects_duplicate_names() {
        let err = DesignSpace::build(
            vec![
                Hyperparameter::continuous("x", 0.0, 1.0, false, 0.5),
                Hyperparameter::continuous("x", 0.0, 2.0, false, 0.5),
            ],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::DuplicateName(_)));
    }

    #[test]
    fn rejects_illegal_bounds_and_activating_values() {
        let err = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 1.0, 1.0, false, 1.0)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::IllegalBounds(_)));

        let err = DesignSpace::build(
            vec![Hyperparameter::continuous("x", -1.0, 1.0, true, 0.5)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::IllegalBounds(_)));

        let err = DesignSpace::build(
            vec![
                Hyperparameter::categorical("kernel", &["rbf", "linear"], "rbf"),
                Hyperparameter::continuous("gamma", 1e-5, 1e1, true, 1e-2),
            ],
            vec![Condition::new("gamma", "kernel", vec!["poly".into()])],
        )
        .unwrap_err();
        assert!(matches!(err, SpaceError::IllegalActivatingValue(_)));
    }

    #[test]
    fn samples_stay_in_bounds() {
        let space = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 0.0, 1.0, false, 0.5)],
            vec![],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let c = space.sample(&mut rng);
            let v = c.value(0).unwrap().as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn log_uniform_sampling_has_geometric_median() {
        let space = DesignSpace::build(
            vec![Hyperparameter::continuous("lr", 1e-4, 1e-1, true, 1e-2)],
            vec![],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples: Vec<f64> = (0..10_000)
            .map(|_| space.sample(&mut rng).value(0).unwrap().as_f64().unwrap())
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = samples[samples.len() / 2];
        // true median of the log-uniform distribution is 10^-2.5
        assert!(median >= 10f64.powf(-2.6) && median <= 10f64.powf(-2.4), "median {median}");
    }

    #[test]
    fn conditional_child_inactive_when_parent_deselects() {
        let space = rbf_space();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut saw_linear = false;
        for _ in 0..200 {
            let c = space.sample(&mut rng);
            if c.value(0).unwrap().as_str() == Some("linear") {
                saw_linear = true;
                assert!(!c.is_active(1), "gamma must be inactive under linear kernel");
            } else {
                assert!(c.is_active(1));
            }
        }
        assert!(saw_linear);
    }

    #[test]
    fn default_configuration_respects_conditions() {
        let space = DesignSpace::build(
            vec![
                Hyperparameter::categorical("kernel", &["rbf", "linear"], "linear"),
                Hyperparameter::continuous("gamma", 1e-5, 1e1, true, 1e-2),
            ],
            vec![Condition::new("gamma", "kernel", vec!["rbf".into()])],
        )
        .unwrap();
        let c = space.default_configuration();
        assert_eq!(c.value(0).unwrap().as_str(), Some("linear"));
        assert!(!c.is_active(1));

        let plain = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 0.0, 1.0, false, 0.5)],
            vec![],
        )
        .unwrap();
        let c = plain.default_configuration();
        assert_eq!(c.value(0).unwrap().as_f64(), Some(0.5));
        assert!(c.active_mask().iter().all(|&a| a));
    }

    #[test]
    fn encodes_midpoint_log_and_categorical() {
        let space = DesignSpace::build(
            vec![
                Hyperparameter::continuous("a", 2.0, 6.0, false, 4.0),
                Hyperparameter::continuous("b", 1e-4, 1e-1, true, 1e-2),
                Hyperparameter::categorical("c", &["p", "q", "r", "s"], "p"),
            ],
            vec![],
        )
        .unwrap();
        let (v, mask) = space
            .to_unit_vector(
                &space
                    .configuration_from_pairs(&[
                        ("a", 4.0.into()),
                        ("b", 10f64.powf(-2.5).into()),
                        ("c", "r".into()),
                    ])
                    .unwrap(),
            )
            .unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 0.625).abs() < 1e-12);
        assert_eq!(mask, vec![true, true, true]);
    }

    #[test]
    fn encode_rejects_out_of_bounds() {
        let space = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 0.0, 1.0, false, 0.5)],
            vec![],
        )
        .unwrap();
        let config = Configuration::from_raw_values(vec![Some(ParamValue::Float(1.5))]);
        assert!(matches!(space.to_unit_vector(&config), Err(SpaceError::ValueOutOfBounds(_))));
    }

    #[test]
    fn decode_clamps_categorical_upper_edge() {
        let space = DesignSpace::build(
            vec![Hyperparameter::categorical("c", &["p", "q", "r", "s"], "p")],
            vec![],
        )
        .unwrap();
        let c = space.from_unit_vector(&[0.999]).unwrap();
        assert_eq!(c.value(0).unwrap().as_str(), Some("s"));
    }

    #[test]
    fn decode_forces_inactive_children() {
        let space = rbf_space();
        // kernel decodes to "linear" (second of two choices) for u >= 0.5
        let c = space.from_unit_vector(&[0.9, 0.7]).unwrap();
        assert_eq!(c.value(0).unwrap().as_str(), Some("linear"));
        assert!(!c.is_active(1));
    }

    #[test]
    fn from_unit_vector_rejects_bad_input() {
        let space = rbf_space();
        assert!(matches!(
            space.from_unit_vector(&[0.5]),
            Err(SpaceError::WrongDimension { expected: 2, got: 1 })
        ));
        assert!(matches!(
            space.from_unit_vector(&[0.5, 1.2]),
            Err(SpaceError::ComponentOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_identity_on_active_configs() {
        let space = DesignSpace::build(
            vec![
                Hyperparameter::continuous("a", -2.0, 3.0, false, 0.0),
                Hyperparameter::continuous("b", 1e-3, 1e2, true, 1.0),
                Hyperparameter::integer("n", -4, 11, false, 2),
                Hyperparameter::categorical("c", &["p", "q", "r"], "q"),
                Hyperparameter::ordinal("o", &["low", "mid", "high"], "mid"),
            ],
            vec![],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let c = space.sample(&mut rng);
            let (v, _) = space.to_unit_vector(&c).unwrap();
            let back = space.from_unit_vector(&v).unwrap();
            for i in 0..space.len() {
                match (c.value(i).unwrap(), back.value(i).unwrap()) {
                    (ParamValue::Float(x), ParamValue::Float(y)) => {
                        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
                    }
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn log_encoding_is_strictly_monotone() {
        let space = DesignSpace::build(
            vec![Hyperparameter::continuous("x", 1e-4, 1e1, true, 1.0)],
            vec![],
        )
        .unwrap();
        let mut prev = -1.0;
        for k in 0..100 {
            let v = 1e-4 * 10f64.powf(5.0 * k as f64 / 99.0);
            let u = space.encode_dim(0, &ParamValue::Float(v.min(1e1))).unwrap();
            assert!(u > prev, "not monotone at {v}");
            prev = u;
        }
    }

    #[test]
    fn check_validity_reports_violations() {
        let space = rbf_space();
        let valid = space.default_configuration();
        assert!(space.check_validity(&valid).is_empty());

        // gamma active while kernel=linear
        let stale = Configuration::from_raw_values(vec![
            Some(ParamValue::Text("linear".into())),
            Some(ParamValue::Float(0.1)),
        ]);
        let violations = space.check_validity(&stale);
        assert_eq!(violations.len(), 1);
        assert!(matches!(&violations[0], Violation::Activity { name, .. } if name == "gamma"));

        // continuous value above upper
        let oob = Configuration::from_raw_values(vec![
            Some(ParamValue::Text("rbf".into())),
            Some(ParamValue::Float(100.0)),
        ]);
        let violations = space.check_validity(&oob);
        assert_eq!(violations.len(), 1);
        assert!(matches!(&violations[0], Violation::Bound { name, .. } if name == "gamma"));
    }

    #[test]
    fn activity_recomputation_is_stable() {
        let space = rbf_space();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let c = space.sample(&mut rng);
            let pairs: Vec<(&str, ParamValue)> = space
                .hyperparameters()
                .iter()
                .zip(c.values())
                .filter_map(|(hp, v)| v.clone().map(|v| (hp.name.as_str(), v)))
                .collect();
            let rebuilt = space.configuration_from_pairs(&pairs).unwrap();
            assert_eq!(c, rebuilt);
        }
    }

    #[test]
    fn json_schema_round_trips_and_rejects_unknown_keys() {
        let text = r#"{
            "hyperparameters": [
                {"name": "kernel", "type": "categorical", "choices": ["rbf", "linear"], "default": "rbf"},
                {"name": "gamma", "type": "continuous", "lower": 1e-5, "upper": 10.0, "log": true, "default": 0.01}
            ],
            "conditions": [
                {"child": "gamma", "parent": "kernel", "values": ["rbf"]}
            ]
        }"#;
        let space = DesignSpace::from_json_str(text).unwrap();
        assert_eq!(space.len(), 2);
        let canonical = space.to_canonical_json();
        let reparsed = DesignSpace::from_json_str(&canonical).unwrap();
        assert_eq!(reparsed.to_canonical_json(), canonical);
        assert_eq!(reparsed.digest(), space.digest());

        let bad = r#"{"hyperparameters": [], "conditions": [], "extra": 1}"#;
        assert!(matches!(DesignSpace::from_json_str(bad), Err(SpaceError::Schema(_))));
    }

    #[test]
    fn missing_default_falls_back_to_scale_midpoint() {
        let text = r#"{
            "hyperparameters": [
                {"name": "x", "type": "continuous", "lower": 2.0, "upper": 6.0},
                {"name": "c", "type": "categorical", "choices": ["p", "q"]}
            ]
        }"#;
        let space = DesignSpace::from_json_str(text).unwrap();
        assert_eq!(space.hyperparameters()[0].default.as_f64(), Some(4.0));
        assert_eq!(space.hyperparameters()[1].default.as_str(), Some("p"));
    }
}
