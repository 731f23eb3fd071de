//! Dataset ingestion: ASSISTments skill-builder exports, KDD Cup step exports,
//! the canonical interchange CSV, and a synthetic generator with known truth.
//!
//! Every parser funnels rows through [`DatasetBuilder`], which orders each
//! student's responses, assigns contiguous per-student time indices and interns
//! the string identifiers into dense indices.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::link::probit;

/// Skill id assigned to interactions that carry no skill tag.
pub const DUMMY_SKILL: &str = "__no_skill__";

/// Header of the canonical interchange format.
pub const CANONICAL_HEADER: [&str; 4] = ["student_id", "item_id", "group_id", "correct"];

const KDD_MULTI_KC_SEPARATOR: &str = "~~";

/// One response: student `student` answered item `item` at per-student position
/// `time_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InteractionRecord {
    pub student: u32,
    pub item: u32,
    pub group: Option<u32>,
    pub skill: u32,
    pub correct: bool,
    pub time_index: u32,
}

/// Interned string identifiers mapped to contiguous indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    ids: IndexSet<String>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(i) = self.ids.get_index_of(id) {
            return i as u32;
        }
        self.ids.insert_full(id.to_owned()).0 as u32
    }

    pub fn get(&self, id: &str) -> Option<u32> {
        self.ids.get_index_of(id).map(|i| i as u32)
    }

    /// The string id for an index. Panics if out of range.
    pub fn name(&self, index: u32) -> &str {
        &self.ids[index as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }
}

/// Which raw export a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Assistments,
    Kdd,
    Canonical,
    Synthetic,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Assistments => "assistments",
            SourceFormat::Kdd => "kdd",
            SourceFormat::Canonical => "canonical",
            SourceFormat::Synthetic => "synthetic",
        })
    }
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "assistments" => Ok(SourceFormat::Assistments),
            "kdd" => Ok(SourceFormat::Kdd),
            "canonical" => Ok(SourceFormat::Canonical),
            "synthetic" => Ok(SourceFormat::Synthetic),
            other => Err(Error::Argument(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// What happened while a dataset was read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub format: SourceFormat,
    pub rows_read: usize,
    pub duplicates_dropped: usize,
    pub dummy_skill_assignments: usize,
    pub notes: Vec<String>,
}

impl Provenance {
    fn new(format: SourceFormat) -> Self {
        Self {
            format,
            rows_read: 0,
            duplicates_dropped: 0,
            dummy_skill_assignments: 0,
            notes: Vec::new(),
        }
    }

    /// Human-readable preprocessing log.
    pub fn log_text(&self) -> String {
        let mut s = format!(
            "source format: {}\nrows read: {}\nduplicates dropped: {}\ndummy-skill assignments: {}\n",
            self.format, self.rows_read, self.duplicates_dropped, self.dummy_skill_assignments
        );
        for n in &self.notes {
            s.push_str("note: ");
            s.push_str(n);
            s.push('\n');
        }
        s
    }
}

/// Column names used as the item identifier and, optionally, the item group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConfig {
    pub item_field: String,
    pub group_field: Option<String>,
}

impl LabelConfig {
    pub fn new(item_field: impl Into<String>, group_field: Option<&str>) -> Self {
        Self {
            item_field: item_field.into(),
            group_field: group_field.map(str::to_owned),
        }
    }

    /// `problem_id` items grouped by `template_id`.
    pub fn assistments_default() -> Self {
        Self::new("problem_id", Some("template_id"))
    }

    /// `Step Name` items grouped by `Problem Name`.
    pub fn kdd_default() -> Self {
        Self::new("Step Name", Some("Problem Name"))
    }
}

/// Counts reported for a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n_interactions: usize,
    pub n_students: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub n_skills: usize,
    /// Absent for an empty dataset.
    pub percent_correct: Option<f64>,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interactions: {}", self.n_interactions)?;
        writeln!(f, "students: {}", self.n_students)?;
        writeln!(f, "items: {}", self.n_items)?;
        writeln!(f, "groups: {}", self.n_groups)?;
        writeln!(f, "skills: {}", self.n_skills)?;
        match self.percent_correct {
            Some(p) => writeln!(f, "percent correct: {:.2}%", 100.0 * p),
            None => writeln!(f, "percent correct: n/a"),
        }
    }
}

/// An immutable collection of responses with dense id indices.
///
/// Records are stored student-major (except for canonical input, which keeps
/// file order); [`Dataset::sequence`] always yields a student's responses in
/// time order.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<InteractionRecord>,
    students: IdIndex,
    items: IdIndex,
    groups: IdIndex,
    skills: IdIndex,
    item_group: Vec<Option<u32>>,
    sequences: Vec<Vec<u32>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn students(&self) -> &IdIndex {
        &self.students
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn groups(&self) -> &IdIndex {
        &self.groups
    }

    pub fn skills(&self) -> &IdIndex {
        &self.skills
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The group j(i) of an item, if it has one.
    pub fn item_group(&self, item: u32) -> Option<u32> {
        self.item_group[item as usize]
    }

    pub fn item_groups(&self) -> &[Option<u32>] {
        &self.item_group
    }

    /// A student's responses in time order.
    pub fn sequence(&self, student: u32) -> impl ExactSizeIterator<Item = &InteractionRecord> + '_ {
        self.sequences[student as usize]
            .iter()
            .map(move |&k| &self.records[k as usize])
    }

    /// A student's responses in time order, collected.
    pub fn sequence_vec(&self, student: u32) -> Vec<InteractionRecord> {
        self.sequence(student).copied().collect()
    }

    /// Number of training responses per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for r in &self.records {
            counts[r.item as usize] += 1;
        }
        counts
    }

    pub fn summary(&self) -> DatasetSummary {
        let n = self.records.len();
        let correct = self.records.iter().filter(|r| r.correct).count();
        DatasetSummary {
            n_interactions: n,
            n_students: self.students.len(),
            n_items: self.items.len(),
            n_groups: self.groups.len(),
            n_skills: self.skills.len(),
            percent_correct: (n > 0).then(|| correct as f64 / n as f64),
        }
    }

    /// Restricts to the given students (re-indexed in the given order) while
    /// keeping the item, group and skill indices intact, so item-level parameters
    /// fitted on the subset line up with the full dataset.
    pub fn subset(&self, students: &[u32]) -> Dataset {
        let mut out_students = IdIndex::new();
        let mut records = Vec::new();
        let mut sequences = Vec::with_capacity(students.len());
        for &s in students {
            let new_s = out_students.intern(self.students.name(s));
            let mut seq = Vec::with_capacity(self.sequences[s as usize].len());
            for r in self.sequence(s) {
                seq.push(records.len() as u32);
                records.push(InteractionRecord { student: new_s, ..*r });
            }
            sequences.push(seq);
        }
        let mut provenance = self.provenance.clone();
        provenance.notes.push(format!("subset of {} students", students.len()));
        Dataset {
            records,
            students: out_students,
            items: self.items.clone(),
            groups: self.groups.clone(),
            skills: self.skills.clone(),
            item_group: self.item_group.clone(),
            sequences,
            provenance,
        }
    }

    /// Replaces every item by its group, so all items of a group become one
    /// item. Fails if some item has no group.
    pub fn collapse_items_to_groups(&self) -> Result<Dataset> {
        let mut records = self.records.clone();
        for r in &mut records {
            let g = r.group.ok_or_else(|| {
                Error::Structure(format!("item `{}` has no group", self.items.name(r.item)))
            })?;
            r.item = g;
        }
        let item_group = (0..self.groups.len() as u32).map(Some).collect();
        Ok(Dataset {
            records,
            students: self.students.clone(),
            items: self.groups.clone(),
            groups: self.groups.clone(),
            skills: self.skills.clone(),
            item_group,
            sequences: self.sequences.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// Writes the canonical `student_id,item_id,group_id,correct` CSV.
    pub fn write_canonical<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().from_writer(w);
        out.write_record(CANONICAL_HEADER)?;
        for r in &self.records {
            let group = r.group.map(|g| self.groups.name(g)).unwrap_or("");
            out.write_record([
                self.students.name(r.student),
                self.items.name(r.item),
                group,
                if r.correct { "1" } else { "0" },
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_canonical_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_canonical(std::io::BufWriter::new(f))
    }

    /// Hex SHA-256 over the canonical serialization; identifies a dataset in
    /// reports and parameter files.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf).expect("in-memory write");
        hex(&Sha256::digest(&buf))
    }

    /// Hash of the student, item and group index maps only.
    pub fn index_hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, idx) in [("s", &self.students), ("i", &self.items), ("g", &self.groups)] {
            for id in idx.iter() {
                h.update(tag.as_bytes());
                h.update(id.as_bytes());
                h.update([0u8]);
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sort key used to order a student's rows: a primary key then file position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum OrderKey {
    Number(u64),
    Text(String),
    FilePosition,
}

struct RawRow {
    student: String,
    item: String,
    group: Option<String>,
    skill: String,
    correct: bool,
    key: OrderKey,
}

/// Accumulates raw rows and produces a [`Dataset`].
struct DatasetBuilder {
    rows: Vec<RawRow>,
    provenance: Provenance,
    preserve_file_order: bool,
    items: IdIndex,
    groups: IdIndex,
}

impl DatasetBuilder {
    fn new(format: SourceFormat) -> Self {
        Self {
            rows: Vec::new(),
            provenance: Provenance::new(format),
            preserve_file_order: false,
            items: IdIndex::new(),
            groups: IdIndex::new(),
        }
    }

    fn build(self) -> Result<Dataset> {
        let DatasetBuilder { rows, mut provenance, preserve_file_order, mut items, mut groups } =
            self;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }

        // Students in order of first appearance; rows per student stably sorted.
        let mut students = IdIndex::new();
        let mut per_student: Vec<Vec<usize>> = Vec::new();
        for (k, row) in rows.iter().enumerate() {
            let s = students.intern(&row.student) as usize;
            if s == per_student.len() {
                per_student.push(Vec::new());
            }
            per_student[s].push(k);
        }
        let mut time_of_row = vec![0u32; rows.len()];
        for seq in &mut per_student {
            seq.sort_by(|&a, &b| rows[a].key.cmp(&rows[b].key));
            for (t, &k) in seq.iter().enumerate() {
                time_of_row[k] = t as u32;
            }
        }

        let emit_order: Vec<usize> = if preserve_file_order {
            (0..rows.len()).collect()
        } else {
            per_student.iter().flatten().copied().collect()
        };

        let mut skills = IdIndex::new();
        let mut item_group: Vec<Option<u32>> = vec![None; items.len()];
        let mut conflicting_groups = 0usize;
        let mut records = Vec::with_capacity(rows.len());
        let mut record_of_row = vec![0u32; rows.len()];
        for &k in &emit_order {
            let row = &rows[k];
            let item = items.intern(&row.item);
            let group = row.group.as_deref().map(|g| groups.intern(g));
            if item as usize >= item_group.len() {
                item_group.resize(item as usize + 1, None);
            }
            match (item_group[item as usize], group) {
                (None, g) => item_group[item as usize] = g,
                (Some(prev), Some(g)) if prev != g => conflicting_groups += 1,
                _ => {}
            }
            let skill = skills.intern(&row.skill);
            record_of_row[k] = records.len() as u32;
            records.push(InteractionRecord {
                student: students.get(&row.student).expect("interned above"),
                item,
                // An item belongs to exactly one group: the first one seen.
                group: item_group[item as usize],
                skill,
                correct: row.correct,
                time_index: time_of_row[k],
            });
        }
        item_group.resize(items.len(), None);
        if conflicting_groups > 0 {
            provenance.notes.push(format!(
                "{conflicting_groups} rows named a different group for an already-grouped item; first group kept"
            ));
        }

        let sequences = per_student
            .iter()
            .map(|seq| seq.iter().map(|&k| record_of_row[k]).collect())
            .collect();

        Ok(Dataset {
            records,
            students,
            items,
            groups,
            skills,
            item_group,
            sequences,
            provenance,
        })
    }
}

/// Resolves required columns of a header by name.
struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn new(header: &csv::StringRecord) -> Self {
        Self { names: header.iter().map(|s| s.trim().to_owned()).collect() }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name).ok_or_else(|| Error::MissingColumn(name.to_owned()))
    }
}

fn parse_correct(raw: &str, row: usize) -> Result<bool> {
    match raw.trim() {
        "1" | "1.0" => Ok(true),
        "0" | "0.0" => Ok(false),
        other => Err(Error::Row {
            row,
            message: format!("unparseable correctness value `{other}`"),
        }),
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "NA"
}

/// Smallest skill label among candidates, or the dummy skill if there are none.
fn arbitrate_skill<'a>(candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates.into_iter().map(str::trim).filter(|s| !is_missing(s)).min()
}

fn reader<R: Read>(rdr: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(rdr)
}

/// Data row number (1-based, counting the header line) for error messages.
fn row_number(record: &csv::ByteRecord, fallback: usize) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

fn field(record: &csv::ByteRecord, idx: usize) -> String {
    record
        .get(idx)
        .map(|b| String::from_utf8_lossy(b).into_owned())
        .unwrap_or_default()
}

/// Parses an ASSISTments skill-builder export.
///
/// One record is kept per distinct `order_id`; its fields come from the first
/// occurrence and its skill is the smallest skill id among all occurrences.
/// Rows without a skill get [`DUMMY_SKILL`]. Each student's rows are ordered by
/// `order_id`.
pub fn parse_assistments<R: Read>(rdr: R, labels: &LabelConfig) -> Result<Dataset> {
    parse_assistments_with(rdr, labels, false)
}

/// As [`parse_assistments`]; with `keep_duplicates` every row is retained.
pub fn parse_assistments_with<R: Read>(
    rdr: R,
    labels: &LabelConfig,
    keep_duplicates: bool,
) -> Result<Dataset> {
    let mut csv = reader(rdr, b',');
    let cols = Columns::new(csv.headers()?);
    let order_col = cols.require("order_id")?;
    let user_col = cols.require("user_id")?;
    cols.require("problem_id")?;
    cols.require("template_id")?;
    let skill_col = cols.require("skill_id")?;
    let correct_col = cols.require("correct")?;
    let item_col = cols.require(&labels.item_field)?;
    let group_col = labels.group_field.as_deref().map(|g| cols.require(g)).transpose()?;

    let mut b = DatasetBuilder::new(SourceFormat::Assistments);
    // order_id -> index of the kept row and the skills seen for it.
    let mut seen: HashMap<String, (usize, Vec<String>)> = HashMap::new();
    let mut skills_per_row: Vec<Vec<String>> = Vec::new();
    let mut record = csv::ByteRecord::new();
    let mut n = 0usize;
    while csv.read_byte_record(&mut record)? {
        n += 1;
        let row = row_number(&record, n + 1);
        let order = field(&record, order_col);
        let order_num: u64 = order.trim().parse().map_err(|_| Error::Row {
            row,
            message: format!("unparseable order_id `{order}`"),
        })?;
        let correct = parse_correct(&field(&record, correct_col), row)?;
        let skill = field(&record, skill_col);

        if !keep_duplicates {
            if let Some((_, skills)) = seen.get_mut(order.trim()) {
                skills.push(skill);
                b.provenance.duplicates_dropped += 1;
                continue;
            }
            seen.insert(order.trim().to_owned(), (b.rows.len(), vec![skill.clone()]));
        }
        skills_per_row.push(vec![skill]);

        let label = |col: usize| -> Option<String> {
            let v = field(&record, col);
            (!is_missing(&v)).then(|| v.trim().to_owned())
        };
        let item = label(item_col).ok_or_else(|| Error::Row {
            row,
            message: format!("missing item label `{}`", labels.item_field),
        })?;
        b.rows.push(RawRow {
            student: field(&record, user_col).trim().to_owned(),
            item,
            group: group_col.and_then(label),
            skill: String::new(),
            correct,
            key: OrderKey::Number(order_num),
        });
    }
    b.provenance.rows_read = n;

    if !keep_duplicates {
        for (_, (k, skills)) in seen {
            skills_per_row[k] = skills;
        }
    }
    for (row, skills) in b.rows.iter_mut().zip(&skills_per_row) {
        match arbitrate_skill(skills.iter().map(String::as_str)) {
            Some(s) => row.skill = s.to_owned(),
            None => {
                row.skill = DUMMY_SKILL.to_owned();
                b.provenance.dummy_skill_assignments += 1;
            }
        }
    }
    if keep_duplicates {
        b.provenance.notes.push("duplicate rows retained".to_owned());
    }
    // Skill-tagged item labels mirror the arbitrated skill.
    if labels.item_field == "skill_id" || labels.group_field.as_deref() == Some("skill_id") {
        for row in &mut b.rows {
            if labels.item_field == "skill_id" {
                row.item = row.skill.clone();
            }
            if labels.group_field.as_deref() == Some("skill_id") {
                row.group = Some(row.skill.clone());
            }
        }
    }
    b.build()
}

/// Parses a KDD Cup 2010 step export (tab-delimited).
///
/// With `item_field = "Step Name"` an item is the (problem, step) pair, since
/// step names repeat across problems. A KC column named `KC` or `KC(<model>)`
/// supplies skills; multi-KC values (`~~`-separated) keep the smallest KC.
/// Rows are ordered by `First Transaction Time` (or `Step Start Time`) within a
/// student when present, otherwise by file order; identical
/// (student, problem, step, time) rows are dropped.
pub fn parse_kdd<R: Read>(rdr: R, labels: &LabelConfig) -> Result<Dataset> {
    let mut csv = reader(rdr, b'\t');
    let cols = Columns::new(csv.headers()?);
    let student_col = cols.require("Anon Student Id")?;
    let problem_col = cols.require("Problem Name")?;
    let step_col = cols.require("Step Name")?;
    let correct_col = cols.require("Correct First Attempt")?;
    let kc_col = cols
        .find("KC")
        .or_else(|| cols.names.iter().position(|n| n.starts_with("KC(")))
        .ok_or_else(|| Error::MissingColumn("KC".to_owned()))?;
    let time_col = cols.find("First Transaction Time").or_else(|| cols.find("Step Start Time"));

    let resolve_label = |name: &str| -> Result<KddLabel> {
        match name {
            "Step Name" => Ok(KddLabel::Step),
            "Problem Name" => Ok(KddLabel::Problem),
            "KC" => Ok(KddLabel::Kc),
            n if n.starts_with("KC(") => Ok(KddLabel::Kc),
            other => cols.require(other).map(KddLabel::Column),
        }
    };
    let item_label = resolve_label(&labels.item_field)?;
    let group_label = labels.group_field.as_deref().map(resolve_label).transpose()?;

    let mut b = DatasetBuilder::new(SourceFormat::Kdd);
    let mut seen: std::collections::HashSet<(String, String, String, String)> =
        std::collections::HashSet::new();
    let mut record = csv::ByteRecord::new();
    let mut n = 0usize;
    while csv.read_byte_record(&mut record)? {
        n += 1;
        let row = row_number(&record, n + 1);
        let student = field(&record, student_col).trim().to_owned();
        let problem = field(&record, problem_col).trim().to_owned();
        let step = field(&record, step_col).trim().to_owned();
        let correct = parse_correct(&field(&record, correct_col), row)?;
        let time = time_col.map(|c| field(&record, c).trim().to_owned());

        if let Some(t) = &time {
            if !seen.insert((student.clone(), problem.clone(), step.clone(), t.clone())) {
                b.provenance.duplicates_dropped += 1;
                continue;
            }
        }

        let kc_raw = field(&record, kc_col);
        let skill = match arbitrate_skill(kc_raw.split(KDD_MULTI_KC_SEPARATOR)) {
            Some(s) => s.to_owned(),
            None => {
                b.provenance.dummy_skill_assignments += 1;
                DUMMY_SKILL.to_owned()
            }
        };
        let label_value = |l: &KddLabel| -> Option<String> {
            match l {
                KddLabel::Step => Some(format!("{problem}|{step}")),
                KddLabel::Problem => Some(problem.clone()),
                KddLabel::Kc => Some(skill.clone()),
                KddLabel::Column(c) => {
                    let v = field(&record, *c);
                    (!is_missing(&v)).then(|| v.trim().to_owned())
                }
            }
        };
        let item = label_value(&item_label).ok_or_else(|| Error::Row {
            row,
            message: format!("missing item label `{}`", labels.item_field),
        })?;
        let group = group_label.as_ref().and_then(label_value);
        b.rows.push(RawRow {
            student,
            item,
            group,
            skill,
            correct,
            key: match time {
                Some(t) => OrderKey::Text(t),
                None => OrderKey::FilePosition,
            },
        });
    }
    b.provenance.rows_read = n;
    b.build()
}

enum KddLabel {
    Step,
    Problem,
    Kc,
    Column(usize),
}

/// Parses the canonical `student_id,item_id,group_id,correct` format. Records
/// keep file order; time indices follow order of appearance within a student.
pub fn parse_canonical<R: Read>(rdr: R) -> Result<Dataset> {
    let mut csv = reader(rdr, b',');
    let cols = Columns::new(csv.headers()?);
    let student_col = cols.require("student_id")?;
    let item_col = cols.require("item_id")?;
    let group_col = cols.find("group_id");
    let correct_col = cols.require("correct")?;

    let mut b = DatasetBuilder::new(SourceFormat::Canonical);
    b.preserve_file_order = true;
    let mut record = csv::ByteRecord::new();
    let mut n = 0usize;
    while csv.read_byte_record(&mut record)? {
        n += 1;
        let row = row_number(&record, n + 1);
        let correct = parse_correct(&field(&record, correct_col), row)?;
        let group = group_col.map(|c| field(&record, c)).filter(|g| !g.is_empty());
        b.rows.push(RawRow {
            student: field(&record, student_col),
            item: field(&record, item_col),
            group,
            skill: DUMMY_SKILL.to_owned(),
            correct,
            key: OrderKey::FilePosition,
        });
    }
    b.provenance.rows_read = n;
    b.build()
}

/// Opens `path` and dispatches on `format`.
pub fn load(
    path: impl AsRef<Path>,
    format: SourceFormat,
    labels: &LabelConfig,
    keep_duplicates: bool,
) -> Result<Dataset> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    match format {
        SourceFormat::Assistments => parse_assistments_with(f, labels, keep_duplicates),
        SourceFormat::Kdd => parse_kdd(f, labels),
        SourceFormat::Canonical => parse_canonical(f),
        SourceFormat::Synthetic => Err(Error::Argument(
            "synthetic datasets are generated, not loaded".to_owned(),
        )),
    }
}

/// Settings for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub n_items: usize,
    /// Zero for ungrouped items with `β ~ N(0, 1)`.
    pub n_groups: usize,
    pub responses_per_student: usize,
    pub theta_variance: f64,
    /// Variance of group means `μ_j`.
    pub tau2: f64,
    /// Variance of item difficulties around their group mean.
    pub sigma2: f64,
    /// Per-step variance of a random walk added to θ; zero for static students.
    pub drift_gamma2: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n_students: usize, n_items: usize, responses_per_student: usize, seed: u64) -> Self {
        Self {
            n_students,
            n_items,
            n_groups: 0,
            responses_per_student,
            theta_variance: 1.0,
            tau2: 1.0,
            sigma2: 1.0,
            drift_gamma2: 0.0,
            seed,
        }
    }
}

/// Generating parameters of a synthetic dataset, aligned with its indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// Proficiency at each student's first response.
    pub true_theta: Vec<f64>,
    pub true_beta: Vec<f64>,
    pub true_mu: Option<Vec<f64>>,
    /// Per-student proficiency at every response; only differs from
    /// `true_theta` when drift is on.
    pub theta_paths: Vec<Vec<f64>>,
    pub config: SyntheticConfig,
}

impl SyntheticTruth {
    /// `P(correct)` for a student's `t`-th response to `item` under the truth.
    pub fn probability(&self, student: u32, time_index: u32, item: u32) -> f64 {
        probit(self.theta_paths[student as usize][time_index as usize] - self.true_beta[item as usize])
    }
}

fn normal(var: f64) -> Result<Normal<f64>> {
    if !(var >= 0.0 && var.is_finite()) {
        return Err(Error::Argument(format!("variance must be finite and non-negative, got {var}")));
    }
    Normal::new(0.0, var.sqrt()).map_err(|e| Error::Argument(e.to_string()))
}

/// Samples a dataset from the 1PO (optionally hierarchical, optionally
/// drifting) generative model. Deterministic given the seed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, SyntheticTruth)> {
    if cfg.n_students == 0 || cfg.n_items == 0 || cfg.responses_per_student == 0 {
        return Err(Error::Argument(
            "student, item and response counts must be positive".to_owned(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta_dist = normal(cfg.theta_variance)?;
    let drift = normal(cfg.drift_gamma2)?;

    let true_theta: Vec<f64> = (0..cfg.n_students).map(|_| theta_dist.sample(&mut rng)).collect();
    let (true_beta, true_mu, item_group): (Vec<f64>, Option<Vec<f64>>, Vec<Option<usize>>) =
        if cfg.n_groups > 0 {
            let mu_dist = normal(cfg.tau2)?;
            let beta_dist = normal(cfg.sigma2)?;
            let mu: Vec<f64> = (0..cfg.n_groups).map(|_| mu_dist.sample(&mut rng)).collect();
            let groups: Vec<Option<usize>> = (0..cfg.n_items).map(|i| Some(i % cfg.n_groups)).collect();
            let beta = groups
                .iter()
                .map(|g| mu[g.unwrap()] + beta_dist.sample(&mut rng))
                .collect();
            (beta, Some(mu), groups)
        } else {
            let beta_dist = normal(1.0)?;
            let beta = (0..cfg.n_items).map(|_| beta_dist.sample(&mut rng)).collect();
            (beta, None, vec![None; cfg.n_items])
        };

    let mut b = DatasetBuilder::new(SourceFormat::Synthetic);
    for i in 0..cfg.n_items {
        b.items.intern(&format!("i{i}"));
    }
    for j in 0..cfg.n_groups {
        b.groups.intern(&format!("g{j}"));
    }
    let mut theta_paths = Vec::with_capacity(cfg.n_students);
    for (s, &theta0) in true_theta.iter().enumerate() {
        let student = format!("s{s}");
        let mut theta = theta0;
        let mut path = Vec::with_capacity(cfg.responses_per_student);
        for t in 0..cfg.responses_per_student {
            if t > 0 && cfg.drift_gamma2 > 0.0 {
                theta += drift.sample(&mut rng);
            }
            path.push(theta);
            let item = rng.random_range(0..cfg.n_items);
            let p = probit(theta - true_beta[item]);
            let correct = rng.random::<f64>() < p;
            b.rows.push(RawRow {
                student: student.clone(),
                item: format!("i{item}"),
                group: item_group[item].map(|g| format!("g{g}")),
                skill: DUMMY_SKILL.to_owned(),
                correct,
                key: OrderKey::Number(t as u64),
            });
        }
        theta_paths.push(path);
    }
    b.provenance.rows_read = b.rows.len();
    b.provenance.notes.push(format!("synthetic seed {}", cfg.seed));
    let mut dataset = b.build()?;
    // Items that were never drawn still belong to their group.
    dataset.item_group = item_group.iter().map(|g| g.map(|g| g as u32)).collect();
    Ok((
        dataset,
        SyntheticTruth { true_theta, true_beta, true_mu, theta_paths, config: cfg.clone() },
    ))
}
