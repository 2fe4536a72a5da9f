//! Reading multi-series data and cutting it into window batches.
//!
//! Two delimited layouts are understood:
//!
//! * wide: one row per time step, one column per series;
//! * long: `time, series_id, value` rows, consecutive rows with the same time
//!   forming one time step.
//!
//! Only the rows of the window under construction are held in memory. A
//! trailing partial window is dropped.

mod synth;

pub use synth::{generate_synth, planted_regimes, write_wide, Generator, Regime, SynthSpec, PLANTED_GENERATORS};

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::PathBuf;

use crate::domain::{StreamBatch, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Wide,
    Long,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Layout::Wide),
            "long" => Ok(Layout::Long),
            other => Err(Error::Config(format!("unknown layout '{other}', expected wide or long"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Path(PathBuf),
    Stdin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestConfig {
    pub source: Source,
    pub layout: Layout,
    pub window_size: usize,
    pub delimiter: u8,
    /// Whether the first line is a header row.
    pub has_header: bool,
}

impl IngestConfig {
    pub fn new(source: Source) -> Self {
        Self {
            source,
            layout: Layout::Wide,
            window_size: 30,
            delimiter: b',',
            has_header: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(Error::Config(format!(
                "window size must be at least 2, got {}",
                self.window_size
            )));
        }
        if self.source == Source::Stdin && self.layout == Layout::Long {
            return Err(Error::Config("standard input accepts the wide layout only".into()));
        }
        Ok(())
    }
}

/// Opens the configured source and returns the window batches in order.
pub fn read_batches(cfg: &IngestConfig) -> Result<BatchReader<Box<dyn Read>>> {
    cfg.validate()?;
    let reader: Box<dyn Read> = match &cfg.source {
        Source::Path(p) => Box::new(File::open(p).map_err(|e| {
            Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?),
        Source::Stdin => Box::new(io::stdin()),
    };
    BatchReader::new(reader, cfg)
}

/// Iterator over the complete windows of a delimited source.
pub struct BatchReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    layout: Layout,
    window_size: usize,
    n_streams: Option<usize>,
    series_index: HashMap<String, usize>,
    pending: Option<(u64, csv::StringRecord)>,
    next_window: u64,
    done: bool,
}

impl<R: Read> BatchReader<R> {
    pub fn new(reader: R, cfg: &IngestConfig) -> Result<Self> {
        cfg.validate()?;
        let records = csv::ReaderBuilder::new()
            .delimiter(cfg.delimiter)
            .has_headers(cfg.has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        Ok(Self {
            records,
            layout: cfg.layout,
            window_size: cfg.window_size,
            n_streams: None,
            series_index: HashMap::new(),
            pending: None,
            next_window: 0,
            done: false,
        })
    }

    pub fn n_streams(&self) -> Option<usize> {
        self.n_streams
    }

    fn next_record(&mut self) -> Result<Option<(u64, csv::StringRecord)>> {
        if let Some(p) = self.pending.take() {
            return Ok(Some(p));
        }
        match self.records.next() {
            None => Ok(None),
            Some(Err(e)) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Err(Error::Data(format!("line {line}: {e}")))
            }
            Some(Ok(r)) => {
                let line = r.position().map(|p| p.line()).unwrap_or(0);
                Ok(Some((line, r)))
            }
        }
    }

    /// One time step across all series, or `None` at end of input.
    fn next_step(&mut self) -> Result<Option<Vec<f64>>> {
        match self.layout {
            Layout::Wide => self.next_wide_step(),
            Layout::Long => self.next_long_step(),
        }
    }

    fn next_wide_step(&mut self) -> Result<Option<Vec<f64>>> {
        let Some((line, record)) = self.next_record()? else {
            return Ok(None);
        };
        let n = *self.n_streams.get_or_insert(record.len());
        if record.len() != n {
            return Err(Error::Data(format!(
                "line {line}: expected {n} fields, found {}",
                record.len()
            )));
        }
        record
            .iter()
            .enumerate()
            .map(|(col, field)| parse_value(field, line, col))
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    }

    fn next_long_step(&mut self) -> Result<Option<Vec<f64>>> {
        let Some((line, record)) = self.next_record()? else {
            return Ok(None);
        };
        let time = field(&record, 0, line)?.to_string();
        let mut group = vec![(line, record)];
        loop {
            match self.next_record()? {
                Some((l, r)) if field(&r, 0, l)? == time => group.push((l, r)),
                Some(other) => {
                    self.pending = Some(other);
                    break;
                }
                None => break,
            }
        }

        if self.n_streams.is_none() {
            for (line, r) in &group {
                let id = field(r, 1, *line)?.to_string();
                let next = self.series_index.len();
                if self.series_index.insert(id.clone(), next).is_some() {
                    return Err(Error::Data(format!("line {line}: series '{id}' repeated at time '{time}'")));
                }
            }
            self.n_streams = Some(self.series_index.len());
        }
        let n = self.n_streams.expect("set above");
        let mut values = vec![None; n];
        for (line, r) in &group {
            if r.len() != 3 {
                return Err(Error::Data(format!("line {line}: expected 3 fields, found {}", r.len())));
            }
            let id = field(r, 1, *line)?;
            let pos = *self
                .series_index
                .get(id)
                .ok_or_else(|| Error::Data(format!("line {line}: unknown series '{id}' at time '{time}'")))?;
            if values[pos].is_some() {
                return Err(Error::Data(format!("line {line}: series '{id}' repeated at time '{time}'")));
            }
            values[pos] = Some(parse_value(field(r, 2, *line)?, *line, 2)?);
        }
        let first_line = group[0].0;
        values
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .map(Some)
            .ok_or_else(|| {
                Error::Data(format!(
                    "line {first_line}: time '{time}' does not report every series"
                ))
            })
    }

    fn next_batch(&mut self) -> Result<Option<StreamBatch>> {
        let mut steps: Vec<Vec<f64>> = Vec::with_capacity(self.window_size);
        while steps.len() < self.window_size {
            match self.next_step()? {
                Some(step) => steps.push(step),
                None => return Ok(None),
            }
        }
        let n = steps[0].len();
        let raw: Vec<Vec<f64>> = (0..n).map(|i| steps.iter().map(|s| s[i]).collect()).collect();
        let batch = StreamBatch::new(Window::new(self.next_window, self.window_size), raw)?;
        self.next_window += 1;
        Ok(Some(batch))
    }
}

impl<R: Read> Iterator for BatchReader<R> {
    type Item = Result<StreamBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_batch() {
            Ok(Some(b)) => Some(Ok(b)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn field(record: &csv::StringRecord, i: usize, line: u64) -> Result<&str> {
    record
        .get(i)
        .ok_or_else(|| Error::Data(format!("line {line}: missing field {}", i + 1)))
}

fn parse_value(field: &str, line: u64, col: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| {
        Error::Data(format!("line {line}, column {}: '{field}' is not a number", col + 1))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "line {line}, column {}: '{field}' is not finite",
            col + 1
        )));
    }
    Ok(v)
}

/// Cuts time-major rows (one row per time step) into window batches,
/// dropping the trailing partial window.
pub fn batches_from_rows(rows: &[Vec<f64>], window_size: usize) -> Result<Vec<StreamBatch>> {
    if window_size < 2 {
        return Err(Error::Config(format!("window size must be at least 2, got {window_size}")));
    }
    rows.chunks_exact(window_size)
        .enumerate()
        .map(|(j, chunk)| {
            let n = chunk[0].len();
            if let Some(bad) = chunk.iter().find(|r| r.len() != n) {
                return Err(Error::Data(format!(
                    "window {j}: ragged rows ({} vs {n} series)",
                    bad.len()
                )));
            }
            let raw = (0..n).map(|i| chunk.iter().map(|r| r[i]).collect()).collect();
            StreamBatch::new(Window::new(j as u64, window_size), raw)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(layout: Layout, w: usize) -> IngestConfig {
        IngestConfig {
            layout,
            window_size: w,
            ..IngestConfig::new(Source::Stdin)
        }
    }

    fn read(text: &str, cfg: &IngestConfig) -> Result<Vec<StreamBatch>> {
        let mut c = cfg.clone();
        c.source = Source::Path("unused".into());
        BatchReader::new(text.as_bytes(), &c)?.collect()
    }

    fn wide_text(n: usize, len: usize) -> String {
        let mut s = (0..n).map(|i| format!("s{i}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for t in 0..len {
            let row: Vec<String> = (0..n).map(|i| format!("{}", t * 10 + i)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn two_series_two_windows() {
        let batches = read(&wide_text(2, 60), &cfg(Layout::Wide, 30)).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].window(), Window::new(1, 30));
        assert_eq!(batches[1].raw()[1][0], 301.0);
    }

    #[test]
    fn trailing_partial_window_is_dropped_and_rows_reassemble() {
        let batches = read(&wide_text(3, 77), &cfg(Layout::Wide, 10)).unwrap();
        assert_eq!(batches.len(), 7);
        for i in 0..3 {
            let joined: Vec<f64> = batches.iter().flat_map(|b| b.raw()[i].clone()).collect();
            let expected: Vec<f64> = (0..70).map(|t| (t * 10 + i) as f64).collect();
            assert_eq!(joined, expected);
        }
    }

    #[test]
    fn non_numeric_cell_names_the_line() {
        let text = "a,b\n1,2\n3,x\n5,6\n";
        let err = read(text, &cfg(Layout::Wide, 2)).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_missing_rows() {
        assert!(matches!(read("a,b\n1,2\n3\n", &cfg(Layout::Wide, 2)), Err(Error::Data(_))));
        assert!(matches!(read("a,b\n1,\n3,4\n", &cfg(Layout::Wide, 2)), Err(Error::Data(_))));
        assert!(matches!(read("a,b\n1,NaN\n3,4\n", &cfg(Layout::Wide, 2)), Err(Error::Data(_))));
    }

    #[test]
    fn empty_input_has_no_batches() {
        assert!(read("", &cfg(Layout::Wide, 30)).unwrap().is_empty());
        assert!(read("a,b\n", &cfg(Layout::Wide, 30)).unwrap().is_empty());
    }

    #[test]
    fn long_layout_matches_wide() {
        let mut long = String::from("time,series,value\n");
        for t in 0..6 {
            // series order varies per time step
            let order: Vec<usize> = if t % 2 == 0 { vec![0, 1, 2] } else { vec![2, 0, 1] };
            for i in order {
                long.push_str(&format!("{t},st{i},{}\n", t * 10 + i));
            }
        }
        let a = read(&long, &cfg(Layout::Long, 3)).unwrap();
        let b = read(&wide_text(3, 6), &cfg(Layout::Wide, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_layout_inconsistent_series() {
        let text = "time,series,value\n0,a,1\n0,b,2\n1,a,3\n1,c,4\n";
        assert!(matches!(read(text, &cfg(Layout::Long, 2)), Err(Error::Data(_))));
        let text = "time,series,value\n0,a,1\n0,b,2\n1,a,3\n";
        assert!(matches!(read(text, &cfg(Layout::Long, 2)), Err(Error::Data(_))));
        let text = "time,series,value\n0,a,1\n0,a,2\n";
        assert!(matches!(read(text, &cfg(Layout::Long, 2)), Err(Error::Data(_))));
    }

    #[test]
    fn semicolon_delimiter() {
        let mut c = cfg(Layout::Wide, 2);
        c.delimiter = b';';
        let batches = read("a;b\n1;2\n3;4\n", &c).unwrap();
        assert_eq!(batches[0].raw(), &[vec![1.0, 3.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn config_validation() {
        assert!(matches!(cfg(Layout::Long, 30).validate(), Err(Error::Config(_))));
        assert!(matches!(cfg(Layout::Wide, 1).validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rainfall_scale_window_count() {
        // 15139 samples at w = 30 give 504 windows and 19 leftover samples
        let rows: Vec<Vec<f64>> = (0..15139).map(|t| vec![t as f64; 2]).collect();
        let batches = batches_from_rows(&rows, 30).unwrap();
        assert_eq!(batches.len(), 504);
        assert_eq!(15139 - 504 * 30, 19);
        assert_eq!(batches[503].raw()[0][29], (504 * 30 - 1) as f64);
    }
}
