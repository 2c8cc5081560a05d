//! npm-flavoured semantic versions and version constraints.
//!
//! Constraints are desugared into a disjunction of comparator sets. Caret,
//! tilde, x-range and hyphen syntax never survive parsing; everything
//! downstream (satisfaction, classification, pinning) works on the comparator
//! form only. Classification looks at the shape of the resulting interval, so
//! `>=8.3.5 <9.0.0` and `^8.3.5` land in the same class.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

/// A single prerelease identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Identifier {
    // Variant order matters: numeric identifiers sort below alphanumeric ones.
    Numeric(u64),
    AlphaNumeric(String),
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identifier::Numeric(n) => write!(f, "{n}"),
            Identifier::AlphaNumeric(s) => f.write_str(s),
        }
    }
}

/// A semantic version. Build metadata is carried but ignored by `Eq`, `Ord`
/// and `Hash`.
#[derive(Debug, Clone)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub pre: Vec<Identifier>,
    pub build: String,
}

impl Version {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Version {
            major,
            minor,
            patch,
            pre: Vec::new(),
            build: String::new(),
        }
    }

    pub fn is_prerelease(&self) -> bool {
        !self.pre.is_empty()
    }

    pub fn triple(&self) -> (u64, u64, u64) {
        (self.major, self.minor, self.patch)
    }

    /// Parses `text`, accepting an optional leading `v`.
    pub fn parse(text: &str) -> Result<Version, ParseError> {
        let mut cursor = Cursor::new(text);
        if matches!(cursor.peek(), Some(b'v') | Some(b'V')) {
            cursor.bump();
        }
        let partial = cursor.partial()?;
        if !cursor.at_end() {
            return Err(ParseError::new(cursor.pos, "unexpected trailing input"));
        }
        partial
            .full_version()
            .ok_or_else(|| ParseError::new(text.len(), "expected major.minor.patch"))
    }

    fn strip_pre(&self) -> Version {
        Version::new(self.major, self.minor, self.patch)
    }

    fn bump_major(&self) -> Option<Version> {
        Some(Version::new(self.major.checked_add(1)?, 0, 0))
    }

    fn bump_minor(&self) -> Option<Version> {
        Some(Version::new(self.major, self.minor.checked_add(1)?, 0))
    }

    fn bump_patch(&self) -> Option<Version> {
        Some(Version::new(self.major, self.minor, self.patch.checked_add(1)?))
    }
}

/// Free-function form of [`Version::parse`].
pub fn parse_version(text: &str) -> Result<Version, ParseError> {
    Version::parse(text)
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.major.hash(state);
        self.minor.hash(state);
        self.patch.hash(state);
        self.pre.hash(state);
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.triple()
            .cmp(&other.triple())
            .then_with(|| match (self.pre.is_empty(), other.pre.is_empty()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                (false, false) => self.pre.cmp(&other.pre),
            })
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)?;
        for (i, id) in self.pre.iter().enumerate() {
            f.write_str(if i == 0 { "-" } else { "." })?;
            write!(f, "{id}")?;
        }
        if !self.build.is_empty() {
            write!(f, "+{}", self.build)?;
        }
        Ok(())
    }
}

impl FromStr for Version {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse(s)
    }
}

impl Serialize for Version {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Version::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Lt,
    Lte,
    Gt,
    Gte,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Lt => "<",
            Op::Lte => "<=",
            Op::Gt => ">",
            Op::Gte => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparator {
    pub op: Op,
    pub version: Version,
}

impl Comparator {
    pub fn new(op: Op, version: Version) -> Self {
        Comparator { op, version }
    }

    pub fn matches(&self, v: &Version) -> bool {
        let ord = v.cmp(&self.version);
        match self.op {
            Op::Eq => ord == Ordering::Equal,
            Op::Lt => ord == Ordering::Less,
            Op::Lte => ord != Ordering::Greater,
            Op::Gt => ord == Ordering::Greater,
            Op::Gte => ord != Ordering::Less,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.op.symbol(), self.version)
    }
}

/// The five-way constraint taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintClass {
    FloatingMajor,
    FloatingMinor,
    FloatingPatch,
    Pinned,
    Other,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 5] = [
        ConstraintClass::FloatingMajor,
        ConstraintClass::FloatingMinor,
        ConstraintClass::FloatingPatch,
        ConstraintClass::Pinned,
        ConstraintClass::Other,
    ];

    pub fn is_floating(self) -> bool {
        matches!(
            self,
            ConstraintClass::FloatingMajor
                | ConstraintClass::FloatingMinor
                | ConstraintClass::FloatingPatch
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintClass::FloatingMajor => "floating-major",
            ConstraintClass::FloatingMinor => "floating-minor",
            ConstraintClass::FloatingPatch => "floating-patch",
            ConstraintClass::Pinned => "pinned",
            ConstraintClass::Other => "other",
        }
    }
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConstraintClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown constraint class `{s}`"))
    }
}

/// A parsed version constraint.
///
/// `sets` is a disjunction of conjunctions. An empty disjunction matches
/// nothing, which is how git/file/URL specifiers and unparseable text are
/// represented.
#[derive(Debug, Clone)]
pub struct VersionConstraint {
    source: String,
    sets: Vec<Vec<Comparator>>,
    class: ConstraintClass,
}

impl PartialEq for VersionConstraint {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for VersionConstraint {}

impl Hash for VersionConstraint {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.source.hash(state);
    }
}

impl VersionConstraint {
    /// Total parse: anything that is not a registry range becomes `Other`
    /// and matches no version.
    pub fn parse(text: &str) -> VersionConstraint {
        match parse_range_set(text) {
            Ok(Some(sets)) => Self::from_sets(text, sets),
            Ok(None) | Err(_) => VersionConstraint {
                source: text.to_string(),
                sets: Vec::new(),
                class: ConstraintClass::Other,
            },
        }
    }

    /// Like [`VersionConstraint::parse`] but reports malformed ranges.
    /// Non-registry specifiers are still accepted (as `Other`).
    pub fn parse_strict(text: &str) -> Result<VersionConstraint, ParseError> {
        match parse_range_set(text)? {
            Some(sets) => Ok(Self::from_sets(text, sets)),
            None => Ok(VersionConstraint {
                source: text.to_string(),
                sets: Vec::new(),
                class: ConstraintClass::Other,
            }),
        }
    }

    /// A constraint admitting exactly `v`.
    pub fn exact(v: &Version) -> VersionConstraint {
        Self::from_sets(
            &v.to_string(),
            vec![vec![Comparator::new(Op::Eq, v.clone())]],
        )
    }

    fn from_sets(source: &str, sets: Vec<Vec<Comparator>>) -> VersionConstraint {
        let class = classify_sets(&sets);
        VersionConstraint {
            source: source.to_string(),
            sets,
            class,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn comparator_sets(&self) -> &[Vec<Comparator>] {
        &self.sets
    }

    pub fn class(&self) -> ConstraintClass {
        self.class
    }

    pub fn is_floating(&self) -> bool {
        self.class.is_floating()
    }

    /// True when some comparator carries a prerelease tag, which is what
    /// lets prerelease versions through.
    pub fn admits_prereleases(&self) -> bool {
        self.sets
            .iter()
            .flatten()
            .any(|c| c.version.is_prerelease())
    }

    pub fn satisfies(&self, v: &Version) -> bool {
        self.sets.iter().any(|set| set_matches(set, v))
    }

    /// Inclusive lower bound of the range when it is a single interval.
    pub fn lower_bound(&self) -> Option<Version> {
        let first = interval_of(self.sets.first()?)?;
        if self.sets.iter().skip(1).any(|s| interval_of(s).as_ref() != Some(&first)) {
            return None;
        }
        match first.lower {
            Some(Bound { version, inclusive: true }) => Some(version),
            None => Some(Version::new(0, 0, 0)),
            _ => None,
        }
    }
}

impl fmt::Display for VersionConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for VersionConstraint {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(VersionConstraint::parse(s))
    }
}

impl Serialize for VersionConstraint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for VersionConstraint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(VersionConstraint::parse(&text))
    }
}

/// Free-function form of [`VersionConstraint::parse`].
pub fn parse_constraint(text: &str) -> VersionConstraint {
    VersionConstraint::parse(text)
}

pub fn satisfies(v: &Version, c: &VersionConstraint) -> bool {
    c.satisfies(v)
}

pub fn classify(c: &VersionConstraint) -> ConstraintClass {
    c.class()
}

fn set_matches(set: &[Comparator], v: &Version) -> bool {
    if !set.iter().all(|c| c.matches(v)) {
        return false;
    }
    if !v.is_prerelease() {
        return true;
    }
    // A prerelease only matches when the set opts into prereleases of
    // the same release triple.
    set.iter()
        .any(|c| c.version.is_prerelease() && c.version.triple() == v.triple())
}

// ---------------------------------------------------------------------------
// Interval shape and classification

#[derive(Debug, Clone, PartialEq, Eq)]
struct Bound {
    version: Version,
    inclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Interval {
    lower: Option<Bound>,
    upper: Option<Bound>,
}

/// Intersects the comparators of one set into a single interval.
/// Returns `None` for an empty interval.
fn interval_of(set: &[Comparator]) -> Option<Interval> {
    let mut lower: Option<Bound> = None;
    let mut upper: Option<Bound> = None;
    let mut tighten_lower = |b: Bound| {
        lower = Some(match lower.take() {
            None => b,
            Some(cur) => match b.version.cmp(&cur.version) {
                Ordering::Greater => b,
                Ordering::Less => cur,
                Ordering::Equal => Bound {
                    version: cur.version,
                    inclusive: cur.inclusive && b.inclusive,
                },
            },
        });
    };
    let mut uppers = Vec::new();
    for c in set {
        let v = c.version.clone();
        match c.op {
            Op::Eq => {
                tighten_lower(Bound { version: v.clone(), inclusive: true });
                uppers.push(Bound { version: v, inclusive: true });
            }
            Op::Gt => tighten_lower(Bound { version: v, inclusive: false }),
            Op::Gte => tighten_lower(Bound { version: v, inclusive: true }),
            Op::Lt => uppers.push(Bound { version: v, inclusive: false }),
            Op::Lte => uppers.push(Bound { version: v, inclusive: true }),
        }
    }
    for b in uppers {
        upper = Some(match upper.take() {
            None => b,
            Some(cur) => match b.version.cmp(&cur.version) {
                Ordering::Less => b,
                Ordering::Greater => cur,
                Ordering::Equal => Bound {
                    version: cur.version,
                    inclusive: cur.inclusive && b.inclusive,
                },
            },
        });
    }
    // `<x.y.z-0` excludes the same versions as `<x.y.z` under the prerelease rule.
    if let Some(u) = upper.as_mut() {
        if !u.inclusive && u.version.pre == [Identifier::Numeric(0)] {
            u.version = u.version.strip_pre();
        }
    }
    let lo = lower.clone().unwrap_or(Bound {
        version: Version::new(0, 0, 0),
        inclusive: true,
    });
    if let Some(u) = &upper {
        match lo.version.cmp(&u.version) {
            Ordering::Greater => return None,
            Ordering::Equal if !(lo.inclusive && u.inclusive) => return None,
            _ => {}
        }
    }
    Some(Interval { lower, upper })
}

fn classify_interval(interval: &Interval) -> ConstraintClass {
    let lower = interval.lower.clone().unwrap_or(Bound {
        version: Version::new(0, 0, 0),
        inclusive: true,
    });
    let Some(upper) = &interval.upper else {
        return ConstraintClass::FloatingMajor;
    };
    if upper.inclusive {
        return if lower.inclusive && lower.version == upper.version {
            ConstraintClass::Pinned
        } else {
            ConstraintClass::Other
        };
    }
    if !lower.inclusive || upper.version.is_prerelease() {
        return ConstraintClass::Other;
    }
    let lo = &lower.version;
    let up = &upper.version;
    if lo.bump_major().as_ref() == Some(up) {
        ConstraintClass::FloatingMinor
    } else if lo.bump_minor().as_ref() == Some(up) {
        ConstraintClass::FloatingPatch
    } else if lo.bump_patch().as_ref() == Some(up) {
        // Only one release (plus, with a tagged lower bound, its prereleases).
        if lo.is_prerelease() {
            ConstraintClass::FloatingPatch
        } else {
            ConstraintClass::Pinned
        }
    } else {
        ConstraintClass::Other
    }
}

fn classify_sets(sets: &[Vec<Comparator>]) -> ConstraintClass {
    let Some(first) = sets.first() else {
        return ConstraintClass::Other;
    };
    let Some(interval) = interval_of(first) else {
        return ConstraintClass::Other;
    };
    if sets[1..].iter().any(|s| interval_of(s).as_ref() != Some(&interval)) {
        return ConstraintClass::Other;
    }
    classify_interval(&interval)
}

// ---------------------------------------------------------------------------
// Parsing

const NON_REGISTRY_PREFIXES: &[&str] = &[
    "git+", "git:", "git@", "http:", "https:", "file:", "link:", "github:", "gitlab:",
    "bitbucket:", "gist:", "npm:", "workspace:", "portal:", "patch:",
];

fn is_non_registry(text: &str) -> bool {
    let t = text.trim();
    NON_REGISTRY_PREFIXES.iter().any(|p| t.starts_with(p)) || t.contains('/') || t.contains(':')
}

/// `Ok(None)` marks a non-registry specifier.
fn parse_range_set(text: &str) -> Result<Option<Vec<Vec<Comparator>>>, ParseError> {
    if is_non_registry(text) {
        return Ok(None);
    }
    let mut sets = Vec::new();
    let mut start = 0;
    for piece in text.split("||") {
        sets.push(parse_range(piece, start)?);
        start += piece.len() + 2;
    }
    Ok(Some(sets))
}

fn parse_range(text: &str, base: usize) -> Result<Vec<Comparator>, ParseError> {
    let mut cursor = Cursor::with_base(text, base);
    let mut out = Vec::new();
    let mut first: Option<Partial> = None;
    let mut count = 0usize;
    loop {
        cursor.skip_ws();
        if cursor.at_end() {
            break;
        }
        // Hyphen range: `A - B`, only as the second token.
        if cursor.peek() == Some(b'-') && count == 1 && first.is_some() {
            cursor.bump();
            if !cursor.skip_ws() {
                return Err(cursor.error("expected whitespace after hyphen"));
            }
            cursor.skip_v();
            let upper = cursor.partial()?;
            cursor.skip_ws();
            if !cursor.at_end() {
                return Err(cursor.error("unexpected input after hyphen range"));
            }
            let lower = first.take().expect("checked above");
            out.clear();
            desugar_hyphen(&lower, &upper, &mut out).map_err(|m| cursor.error(m))?;
            if out.is_empty() {
                out.push(Comparator::new(Op::Gte, Version::new(0, 0, 0)));
            }
            return Ok(out);
        }
        let op = cursor.operator();
        cursor.skip_ws();
        cursor.skip_v();
        let start = cursor.pos;
        let partial = cursor.partial()?;
        if !cursor.at_end() && !cursor.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(cursor.error("unexpected character in range"));
        }
        desugar(op, &partial, &mut out).map_err(|m| ParseError::new(start, m))?;
        first = if op == RangeOp::None { Some(partial) } else { None };
        count += 1;
    }
    if out.is_empty() {
        // Empty range means any version.
        out.push(Comparator::new(Op::Gte, Version::new(0, 0, 0)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RangeOp {
    None,
    Eq,
    Lt,
    Lte,
    Gt,
    Gte,
    Tilde,
    Caret,
}

#[derive(Debug, Clone, Default)]
struct Partial {
    major: Option<u64>,
    minor: Option<u64>,
    patch: Option<u64>,
    pre: Vec<Identifier>,
    build: String,
}

impl Partial {
    fn full_version(&self) -> Option<Version> {
        Some(Version {
            major: self.major?,
            minor: self.minor?,
            patch: self.patch?,
            pre: self.pre.clone(),
            build: self.build.clone(),
        })
    }

    /// Version with wildcards zeroed.
    fn floor(&self) -> Version {
        match self.full_version() {
            Some(mut v) => {
                v.build.clear();
                v
            }
            None => Version::new(
                self.major.unwrap_or(0),
                self.minor.unwrap_or(0),
                self.patch.unwrap_or(0),
            ),
        }
    }
}

const OVERFLOW: &str = "version component overflow";

fn desugar(op: RangeOp, p: &Partial, out: &mut Vec<Comparator>) -> Result<(), &'static str> {
    use Op::*;
    let floor = p.floor();
    let any = || Comparator::new(Gte, Version::new(0, 0, 0));
    let none = || Comparator::new(Lt, Version::new(0, 0, 0));
    match op {
        RangeOp::None | RangeOp::Eq => match (p.major, p.minor, p.patch) {
            (None, _, _) => out.push(any()),
            (Some(_), None, _) => {
                out.push(Comparator::new(Gte, floor.clone()));
                out.push(Comparator::new(Lt, floor.bump_major().ok_or(OVERFLOW)?));
            }
            (Some(_), Some(_), None) => {
                out.push(Comparator::new(Gte, floor.clone()));
                out.push(Comparator::new(Lt, floor.bump_minor().ok_or(OVERFLOW)?));
            }
            _ => out.push(Comparator::new(Eq, floor)),
        },
        RangeOp::Tilde => match (p.major, p.minor) {
            (None, _) => out.push(any()),
            (Some(_), None) => {
                out.push(Comparator::new(Gte, floor.clone()));
                out.push(Comparator::new(Lt, floor.bump_major().ok_or(OVERFLOW)?));
            }
            (Some(_), Some(_)) => {
                out.push(Comparator::new(Gte, floor.clone()));
                out.push(Comparator::new(Lt, floor.bump_minor().ok_or(OVERFLOW)?));
            }
        },
        RangeOp::Caret => match (p.major, p.minor, p.patch) {
            (None, _, _) => out.push(any()),
            (Some(major), minor, patch) => {
                let upper = if major > 0 || minor.is_none() {
                    floor.bump_major()
                } else if minor != Some(0) || patch.is_none() {
                    floor.bump_minor()
                } else {
                    floor.bump_patch()
                };
                out.push(Comparator::new(Gte, floor.clone()));
                out.push(Comparator::new(Lt, upper.ok_or(OVERFLOW)?));
            }
        },
        RangeOp::Gt => match (p.major, p.minor, p.patch) {
            (None, _, _) => out.push(none()),
            (Some(_), None, _) => out.push(Comparator::new(Gte, floor.bump_major().ok_or(OVERFLOW)?)),
            (Some(_), Some(_), None) => {
                out.push(Comparator::new(Gte, floor.bump_minor().ok_or(OVERFLOW)?))
            }
            _ => out.push(Comparator::new(Gt, floor)),
        },
        RangeOp::Gte => match p.major {
            None => out.push(any()),
            Some(_) => out.push(Comparator::new(Gte, floor)),
        },
        RangeOp::Lt => match p.major {
            None => out.push(none()),
            Some(_) => out.push(Comparator::new(Lt, floor)),
        },
        RangeOp::Lte => match (p.major, p.minor, p.patch) {
            (None, _, _) => out.push(any()),
            (Some(_), None, _) => out.push(Comparator::new(Lt, floor.bump_major().ok_or(OVERFLOW)?)),
            (Some(_), Some(_), None) => {
                out.push(Comparator::new(Lt, floor.bump_minor().ok_or(OVERFLOW)?))
            }
            _ => out.push(Comparator::new(Lte, floor)),
        },
    }
    Ok(())
}

fn desugar_hyphen(lower: &Partial, upper: &Partial, out: &mut Vec<Comparator>) -> Result<(), &'static str> {
    if lower.major.is_some() {
        out.push(Comparator::new(Op::Gte, lower.floor()));
    }
    match (upper.major, upper.minor, upper.patch) {
        (None, _, _) => {}
        (Some(_), None, _) => out.push(Comparator::new(
            Op::Lt,
            upper.floor().bump_major().ok_or(OVERFLOW)?,
        )),
        (Some(_), Some(_), None) => out.push(Comparator::new(
            Op::Lt,
            upper.floor().bump_minor().ok_or(OVERFLOW)?,
        )),
        _ => out.push(Comparator::new(Op::Lte, upper.floor())),
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    text: &'a str,
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self::with_base(text, 0)
    }

    fn with_base(text: &'a str, base: usize) -> Self {
        Cursor {
            bytes: text.as_bytes(),
            text,
            pos: 0,
            base,
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.base + self.pos, message)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.bump();
        }
        self.pos > start
    }

    fn skip_v(&mut self) {
        if matches!(self.peek(), Some(b'v') | Some(b'V'))
            && self.bytes.get(self.pos + 1).is_some_and(|b| b.is_ascii_digit())
        {
            self.bump();
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.text[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn operator(&mut self) -> RangeOp {
        if self.eat(">=") {
            RangeOp::Gte
        } else if self.eat("<=") {
            RangeOp::Lte
        } else if self.eat(">") {
            RangeOp::Gt
        } else if self.eat("<") {
            RangeOp::Lt
        } else if self.eat("=") {
            RangeOp::Eq
        } else if self.eat("~>") || self.eat("~") {
            RangeOp::Tilde
        } else if self.eat("^") {
            RangeOp::Caret
        } else {
            RangeOp::None
        }
    }

    /// `xr ( '.' xr ( '.' xr pre? build? )? )?`
    fn partial(&mut self) -> Result<Partial, ParseError> {
        let mut p = Partial::default();
        let major = self.x_or_number()?;
        p.major = major;
        let mut wildcard = major.is_none();
        if self.peek() == Some(b'.') {
            self.bump();
            let minor = self.x_or_number()?;
            wildcard |= minor.is_none();
            p.minor = if wildcard { None } else { minor };
            if self.peek() == Some(b'.') {
                self.bump();
                let patch = self.x_or_number()?;
                wildcard |= patch.is_none();
                p.patch = if wildcard { None } else { patch };
                if self.peek() == Some(b'-') {
                    self.bump();
                    p.pre = self.prerelease()?;
                }
                if self.peek() == Some(b'+') {
                    self.bump();
                    p.build = self.build()?;
                }
                if wildcard && !p.pre.is_empty() {
                    p.pre.clear();
                }
            }
        }
        Ok(p)
    }

    fn x_or_number(&mut self) -> Result<Option<u64>, ParseError> {
        match self.peek() {
            Some(b'x') | Some(b'X') | Some(b'*') => {
                self.bump();
                Ok(None)
            }
            Some(b) if b.is_ascii_digit() => self.number().map(Some),
            _ => Err(self.error("expected number or wildcard")),
        }
    }

    fn number(&mut self) -> Result<u64, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.bump();
        }
        let digits = &self.text[start..self.pos];
        if digits.is_empty() {
            return Err(self.error("expected number"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(ParseError::new(self.base + start, "leading zero in numeric component"));
        }
        digits
            .parse()
            .map_err(|_| ParseError::new(self.base + start, "numeric component too large"))
    }

    fn ident_run(&mut self) -> &'a str {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'-')
        {
            self.bump();
        }
        &self.text[start..self.pos]
    }

    fn prerelease(&mut self) -> Result<Vec<Identifier>, ParseError> {
        let mut ids = Vec::new();
        loop {
            let start = self.pos;
            let run = self.ident_run();
            if run.is_empty() {
                return Err(self.error("empty prerelease identifier"));
            }
            let id = if run.bytes().all(|b| b.is_ascii_digit()) {
                if run.len() > 1 && run.starts_with('0') {
                    return Err(ParseError::new(self.base + start, "leading zero in prerelease identifier"));
                }
                Identifier::Numeric(run.parse().map_err(|_| {
                    ParseError::new(self.base + start, "prerelease number too large")
                })?)
            } else {
                Identifier::AlphaNumeric(run.to_string())
            };
            ids.push(id);
            if self.peek() == Some(b'.') {
                self.bump();
            } else {
                return Ok(ids);
            }
        }
    }

    fn build(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        loop {
            if self.ident_run().is_empty() {
                return Err(self.error("empty build identifier"));
            }
            if self.peek() == Some(b'.') {
                self.bump();
            } else {
                return Ok(self.text[start..self.pos].to_string());
            }
        }
    }
}
