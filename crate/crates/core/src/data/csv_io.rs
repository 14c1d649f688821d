use super::{
    AgeGroup, CycleRecord, DataError, Gender, PatientRecord, Period, PeriodToxicity, Toxicity,
    Trial, PROTOCOL_CYCLES,
};
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

pub const PATIENTS_FILE: &str = "patients.csv";
pub const CYCLES_FILE: &str = "cycles.csv";
pub const TOXICITY_FILE: &str = "toxicity.csv";

const PATIENT_COLUMNS: [&str; 10] = [
    "id",
    "trial",
    "age_group",
    "gender",
    "necrosis_pct",
    "efs_time_months",
    "efs_event",
    "completed_treatment",
    "had_surgery",
    "event_during_treatment",
];
const CYCLE_COLUMNS: [&str; 5] = ["id", "cycle_index", "dose_cddp", "dose_dox", "start_day"];
const TOXICITY_COLUMNS: [&str; 4] = ["id", "period", "toxicity_name", "grade"];

/// On-disk layout of a patient file set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// A directory holding `patients.csv`, `cycles.csv` and `toxicity.csv`.
    #[default]
    Long,
    /// A single CSV with one row per patient; cycle and toxicity fields are
    /// spread over `cycle{j}_*` and `tox_{period}_{name}` columns.
    Wide,
}

impl FromStr for Schema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(Schema::Long),
            "wide" => Ok(Schema::Wide),
            other => Err(format!("unknown schema `{other}` (expected long or wide)")),
        }
    }
}

/// Reads and validates patient records. `path` is a directory for
/// [`Schema::Long`] and a file for [`Schema::Wide`].
pub fn read_patients(path: &Path, schema: Schema) -> Result<Vec<PatientRecord>, DataError> {
    let records = match schema {
        Schema::Long => read_long(path)?,
        Schema::Wide => read_wide(path)?,
    };
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(DataError::DuplicateId(r.id.clone()));
        }
        r.validate()?;
    }
    Ok(records)
}

pub fn write_patients(
    path: &Path,
    schema: Schema,
    records: &[PatientRecord],
) -> Result<(), DataError> {
    match schema {
        Schema::Long => write_long(path, records),
        Schema::Wide => write_wide(path, records),
    }
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    reader: csv::Reader<File>,
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    columns: &'a HashMap<String, usize>,
    record: csv::StringRecord,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Table, DataError> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|source| DataError::Io {
            path: file.clone(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(handle);
        let headers = reader
            .headers()
            .map_err(|source| DataError::Csv {
                path: file.clone(),
                source,
            })?
            .clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for name in required {
            if !columns.contains_key(*name) {
                return Err(DataError::MissingColumn {
                    file,
                    name: name.to_string(),
                });
            }
        }
        Ok(Table {
            file,
            columns,
            reader,
        })
    }

    fn for_each_row(
        &mut self,
        mut f: impl FnMut(&Row<'_>) -> Result<(), DataError>,
    ) -> Result<(), DataError> {
        for result in self.reader.records() {
            let record = result.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                DataError::MalformedRow {
                    file: self.file.clone(),
                    line,
                    reason: e.to_string(),
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            f(&Row {
                file: &self.file,
                line,
                columns: &self.columns,
                record,
            })?;
        }
        Ok(())
    }
}

impl Row<'_> {
    fn malformed(&self, reason: impl Into<String>) -> DataError {
        DataError::MalformedRow {
            file: self.file.to_string(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn raw(&self, column: &str) -> Result<&str, DataError> {
        let idx = *self.columns.get(column).ok_or_else(|| DataError::MissingColumn {
            file: self.file.to_string(),
            name: column.to_string(),
        })?;
        self.record
            .get(idx)
            .ok_or_else(|| self.malformed(format!("missing field `{column}`")))
    }

    fn text(&self, column: &str) -> Result<String, DataError> {
        let v = self.raw(column)?;
        if v.is_empty() {
            return Err(self.malformed(format!("empty field `{column}`")));
        }
        Ok(v.to_string())
    }

    fn parse<T: FromStr>(&self, column: &str) -> Result<T, DataError> {
        let v = self.raw(column)?;
        v.parse()
            .map_err(|_| self.malformed(format!("cannot parse `{column}` value `{v}`")))
    }

    fn optional_f64(&self, column: &str) -> Result<Option<f64>, DataError> {
        if self.raw(column)?.is_empty() {
            Ok(None)
        } else {
            self.parse(column).map(Some)
        }
    }

    fn flag(&self, column: &str) -> Result<bool, DataError> {
        match self.raw(column)? {
            "1" | "true" | "TRUE" | "True" => Ok(true),
            "0" | "false" | "FALSE" | "False" => Ok(false),
            v => Err(self.malformed(format!("`{column}` must be 0/1 or true/false, got `{v}`"))),
        }
    }

    fn trial(&self) -> Result<Trial, DataError> {
        match self.raw("trial")? {
            "BO03" => Ok(Trial::BO03),
            "BO06" => Ok(Trial::BO06),
            v => Err(self.malformed(format!("unknown trial `{v}`"))),
        }
    }

    fn age_group(&self) -> Result<AgeGroup, DataError> {
        match self.raw("age_group")? {
            "child" => Ok(AgeGroup::Child),
            "adolescent" => Ok(AgeGroup::Adolescent),
            "adult" => Ok(AgeGroup::Adult),
            v => Err(self.malformed(format!("unknown age_group `{v}`"))),
        }
    }

    fn gender(&self) -> Result<Gender, DataError> {
        match self.raw("gender")? {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            v => Err(self.malformed(format!("unknown gender `{v}`"))),
        }
    }

    fn period(&self, column: &str) -> Result<Period, DataError> {
        match self.raw(column)? {
            "pre" => Ok(Period::Pre),
            "post" => Ok(Period::Post),
            v => Err(self.malformed(format!("unknown period `{v}`"))),
        }
    }

    fn grade(&self, column: &str) -> Result<u8, DataError> {
        let v = self.raw(column)?;
        if v.is_empty() {
            return Err(self.malformed(format!("missing toxicity grade `{column}`")));
        }
        self.parse(column)
    }

    fn patient_head(&self) -> Result<PatientRecord, DataError> {
        let id = self.text("id")?;
        Ok(PatientRecord {
            trial: self.trial()?,
            age_group: self.age_group()?,
            gender: self.gender()?,
            cycles: Vec::new(),
            toxicity: [PeriodToxicity::none(Period::Pre), PeriodToxicity::none(Period::Post)],
            hre_necrosis_pct: self.optional_f64("necrosis_pct")?,
            efs_time_months: self.parse("efs_time_months")?,
            efs_event: self.flag("efs_event")?,
            completed_treatment: self.flag("completed_treatment")?,
            had_surgery: self.flag("had_surgery")?,
            event_during_treatment: self.flag("event_during_treatment")?,
            id,
        })
    }
}

fn read_long(dir: &Path) -> Result<Vec<PatientRecord>, DataError> {
    let mut patients: Vec<PatientRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut table = Table::open(&dir.join(PATIENTS_FILE), &PATIENT_COLUMNS)?;
    table.for_each_row(|row| {
        let p = row.patient_head()?;
        if by_id.insert(p.id.clone(), patients.len()).is_some() {
            return Err(DataError::DuplicateId(p.id));
        }
        patients.push(p);
        Ok(())
    })?;

    let mut table = Table::open(&dir.join(CYCLES_FILE), &CYCLE_COLUMNS)?;
    table.for_each_row(|row| {
        let id = row.text("id")?;
        let slot = *by_id
            .get(&id)
            .ok_or_else(|| row.malformed(format!("unknown patient id `{id}`")))?;
        patients[slot].cycles.push(CycleRecord {
            index: row.parse("cycle_index")?,
            dose_cddp_mg_m2: row.parse("dose_cddp")?,
            dose_dox_mg_m2: row.parse("dose_dox")?,
            start_day: row.parse("start_day")?,
        });
        Ok(())
    })?;
    for p in &mut patients {
        p.cycles.sort_by_key(|c| c.index);
        if p.cycles.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(DataError::InvariantViolation {
                id: p.id.clone(),
                detail: "duplicated cycle index".into(),
            });
        }
    }

    let mut seen: Vec<[[bool; 8]; 2]> = vec![[[false; 8]; 2]; patients.len()];
    let mut table = Table::open(&dir.join(TOXICITY_FILE), &TOXICITY_COLUMNS)?;
    table.for_each_row(|row| {
        let id = row.text("id")?;
        let slot = *by_id
            .get(&id)
            .ok_or_else(|| row.malformed(format!("unknown patient id `{id}`")))?;
        let period = row.period("period")?;
        let name = row.raw("toxicity_name")?;
        let tox = Toxicity::from_name(name)
            .ok_or_else(|| row.malformed(format!("unknown toxicity `{name}`")))?;
        let grade = row.grade("grade")?;
        let mark = &mut seen[slot][period as usize][tox as usize];
        if *mark {
            return Err(row.malformed(format!(
                "duplicate {name} grade for `{id}` in period {}",
                period.as_str()
            )));
        }
        *mark = true;
        patients[slot].toxicity[period as usize].set_grade(tox, grade);
        Ok(())
    })?;
    for (p, marks) in patients.iter().zip(&seen) {
        check_toxicity_complete(&p.id, marks)?;
    }
    Ok(patients)
}

fn check_toxicity_complete(id: &str, marks: &[[bool; 8]; 2]) -> Result<(), DataError> {
    for period in Period::ALL {
        for tox in Toxicity::ALL {
            if !marks[period as usize][tox as usize] {
                return Err(DataError::InvariantViolation {
                    id: id.to_string(),
                    detail: format!("missing {} grade for period {}", tox.name(), period.as_str()),
                });
            }
        }
    }
    Ok(())
}

fn wide_cycle_columns(j: usize) -> [String; 3] {
    [
        format!("cycle{j}_dose_cddp"),
        format!("cycle{j}_dose_dox"),
        format!("cycle{j}_start_day"),
    ]
}

fn wide_toxicity_column(period: Period, tox: Toxicity) -> String {
    format!("tox_{}_{}", period.as_str(), tox.name())
}

fn wide_header() -> Vec<String> {
    let mut cols: Vec<String> = PATIENT_COLUMNS.iter().map(|s| s.to_string()).collect();
    for j in 1..=PROTOCOL_CYCLES {
        cols.extend(wide_cycle_columns(j));
    }
    for period in Period::ALL {
        for tox in Toxicity::ALL {
            cols.push(wide_toxicity_column(period, tox));
        }
    }
    cols
}

fn read_wide(path: &Path) -> Result<Vec<PatientRecord>, DataError> {
    let header = wide_header();
    let required: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::open(path, &required)?;
    let mut patients = Vec::new();
    table.for_each_row(|row| {
        let mut p = row.patient_head()?;
        for j in 1..=PROTOCOL_CYCLES {
            let [cddp, dox, start] = wide_cycle_columns(j);
            let present = [&cddp, &dox, &start]
                .iter()
                .filter(|c| row.raw(c).map(|v| !v.is_empty()).unwrap_or(false))
                .count();
            match present {
                0 => continue,
                3 => p.cycles.push(CycleRecord {
                    index: j as u8,
                    dose_cddp_mg_m2: row.parse(&cddp)?,
                    dose_dox_mg_m2: row.parse(&dox)?,
                    start_day: row.parse(&start)?,
                }),
                _ => return Err(row.malformed(format!("cycle {j} partially recorded"))),
            }
        }
        for period in Period::ALL {
            for tox in Toxicity::ALL {
                let g = row.grade(&wide_toxicity_column(period, tox))?;
                p.toxicity[period as usize].set_grade(tox, g);
            }
        }
        patients.push(p);
        Ok(())
    })?;
    Ok(patients)
}

fn create_writer(path: &Path) -> Result<csv::Writer<File>, DataError> {
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn trial_str(t: Trial) -> &'static str {
    match t {
        Trial::BO03 => "BO03",
        Trial::BO06 => "BO06",
    }
}

fn age_str(a: AgeGroup) -> &'static str {
    match a {
        AgeGroup::Child => "child",
        AgeGroup::Adolescent => "adolescent",
        AgeGroup::Adult => "adult",
    }
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::Female => "female",
        Gender::Male => "male",
    }
}

fn flag_str(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn patient_fields(p: &PatientRecord) -> Vec<String> {
    vec![
        p.id.clone(),
        trial_str(p.trial).into(),
        age_str(p.age_group).into(),
        gender_str(p.gender).into(),
        p.hre_necrosis_pct.map(|v| v.to_string()).unwrap_or_default(),
        p.efs_time_months.to_string(),
        flag_str(p.efs_event).into(),
        flag_str(p.completed_treatment).into(),
        flag_str(p.had_surgery).into(),
        flag_str(p.event_during_treatment).into(),
    ]
}

fn write_long(dir: &Path, records: &[PatientRecord]) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(PATIENTS_FILE);
    let mut w = create_writer(&path)?;
    w.write_record(PATIENT_COLUMNS).map_err(csv_err(&path))?;
    for p in records {
        w.write_record(patient_fields(p)).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let path = dir.join(CYCLES_FILE);
    let mut w = create_writer(&path)?;
    w.write_record(CYCLE_COLUMNS).map_err(csv_err(&path))?;
    for p in records {
        for c in &p.cycles {
            w.write_record([
                p.id.clone(),
                c.index.to_string(),
                c.dose_cddp_mg_m2.to_string(),
                c.dose_dox_mg_m2.to_string(),
                c.start_day.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let path = dir.join(TOXICITY_FILE);
    let mut w = create_writer(&path)?;
    w.write_record(TOXICITY_COLUMNS).map_err(csv_err(&path))?;
    for p in records {
        for period in Period::ALL {
            for tox in Toxicity::ALL {
                w.write_record([
                    p.id.as_str(),
                    period.as_str(),
                    tox.name(),
                    &p.period_toxicity(period).grade(tox).to_string(),
                ])
                .map_err(csv_err(&path))?;
            }
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_wide(path: &Path, records: &[PatientRecord]) -> Result<(), DataError> {
    let mut w = create_writer(path)?;
    w.write_record(wide_header()).map_err(csv_err(path))?;
    for p in records {
        let mut fields = patient_fields(p);
        for j in 1..=PROTOCOL_CYCLES {
            match p.cycles.iter().find(|c| c.index as usize == j) {
                Some(c) => fields.extend([
                    c.dose_cddp_mg_m2.to_string(),
                    c.dose_dox_mg_m2.to_string(),
                    c.start_day.to_string(),
                ]),
                None => fields.extend([String::new(), String::new(), String::new()]),
            }
        }
        for period in Period::ALL {
            for tox in Toxicity::ALL {
                fields.push(p.period_toxicity(period).grade(tox).to_string());
            }
        }
        w.write_record(fields).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
