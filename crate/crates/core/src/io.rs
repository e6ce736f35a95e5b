//! File formats.
//!
//! * `zones.csv`: header `zone_id,population[,x_km,y_km]`
//! * `deltas.csv`: header `date,<zone_id_1>,...,<zone_id_N>`, one row per day
//! * `network.csv` / feature files: headerless `N x N` matrix in canonical
//!   zone order
//! * `config.json`: [`InferenceConfig`] fields
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so write-then-read is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::domain::{InferenceConfig, InfectionNetwork, Metapopulation, OutbreakSeries, Zone};
use crate::error::{Error, Result};

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{what}: `{field}`: {e}")))
}

pub fn read_zones<R: Read>(reader: R) -> Result<Metapopulation> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_xy = match cols.as_slice() {
        ["zone_id", "population"] => false,
        ["zone_id", "population", "x_km", "y_km"] => true,
        _ => {
            return Err(Error::Parse(format!(
                "zones header must be `zone_id,population[,x_km,y_km]`, got `{}`",
                cols.join(",")
            )))
        }
    };
    let mut zones = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec[0].to_string();
        let population = parse_f64(&rec[1], "population")?;
        let mut zone = Zone::new(id, population);
        if has_xy && !rec[2].is_empty() && !rec[3].is_empty() {
            zone.centroid = Some((parse_f64(&rec[2], "x_km")?, parse_f64(&rec[3], "y_km")?));
        }
        zones.push(zone);
    }
    Metapopulation::new(zones)
}

pub fn write_zones<W: Write>(pop: &Metapopulation, writer: W) -> Result<()> {
    let has_xy = pop.zones().iter().any(|z| z.centroid.is_some());
    let mut w = csv::Writer::from_writer(writer);
    if has_xy {
        w.write_record(["zone_id", "population", "x_km", "y_km"])?;
    } else {
        w.write_record(["zone_id", "population"])?;
    }
    for z in pop.zones() {
        let mut row = vec![z.id.clone(), fmt_f64(z.population)];
        if has_xy {
            match z.centroid {
                Some((x, y)) => {
                    row.push(fmt_f64(x));
                    row.push(fmt_f64(y));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads daily counts. Zone columns may appear in any order but must cover
/// every zone of `pop` exactly once.
pub fn read_deltas<R: Read>(reader: R, pop: &Metapopulation, beta: f64) -> Result<OutbreakSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("date") {
        return Err(Error::Parse("deltas header must start with `date`".into()));
    }
    let n = pop.len();
    pop.check_len("deltas zone columns", headers.len() - 1)?;
    let mut col_to_zone = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for id in headers.iter().skip(1) {
        let idx = pop
            .index_of(id)
            .ok_or_else(|| Error::Parse(format!("unknown zone `{id}` in deltas header")))?;
        if seen[idx] {
            return Err(Error::DuplicateZone(id.to_string()));
        }
        seen[idx] = true;
        col_to_zone.push(idx);
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        dates.push(rec[0].to_string());
        let mut row = vec![0.0; n];
        for (c, field) in rec.iter().skip(1).enumerate() {
            row[col_to_zone[c]] = parse_f64(field, "delta")?;
        }
        values.extend(row);
    }
    let t_len = dates.len();
    let deltas = Array2::from_shape_vec((t_len, n), values)
        .map_err(|e| Error::Parse(format!("deltas shape: {e}")))?;
    OutbreakSeries::new(deltas, dates, beta, pop)
}

pub fn write_deltas<W: Write>(series: &OutbreakSeries, pop: &Metapopulation, writer: W) -> Result<()> {
    pop.check_len("series zones", series.zones())?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(pop.ids().map(str::to_string));
    w.write_record(&header)?;
    for (date, row) in series.dates().iter().zip(series.deltas().rows()) {
        let mut rec = vec![date.clone()];
        rec.extend(row.iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless square matrix.
pub fn read_matrix<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|f| parse_f64(f, "matrix entry"))
                .collect::<Result<_>>()?,
        );
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::Parse(format!(
                "matrix row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
    }
    Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_matrix<W: Write>(m: ArrayView2<'_, f64>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.rows() {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_network<R: Read>(reader: R, pop: &Metapopulation) -> Result<InfectionNetwork> {
    let g = read_matrix(reader)?;
    pop.check_len("network rows", g.nrows())?;
    InfectionNetwork::new(g)
}

pub fn read_config<R: Read>(reader: R) -> Result<InferenceConfig> {
    let cfg: InferenceConfig = serde_json::from_reader(reader)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config<W: Write>(cfg: &InferenceConfig, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, cfg)?;
    Ok(())
}

/// Writes an optimizer trace as `iter,objective`.
pub fn write_trace<W: Write>(trace: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "objective"])?;
    for (i, j) in trace.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*j)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn open(path: impl AsRef<Path>) -> Result<BufReader<File>> {
    let path = path.as_ref();
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    let path = path.as_ref();
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zones_with_and_without_centroids() {
        let src = "zone_id,population,x_km,y_km\nb,200,1.5,2\na,100,0,0\n";
        let pop = read_zones(src.as_bytes()).unwrap();
        assert_eq!(pop.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(pop.zones()[1].centroid, Some((1.5, 2.0)));

        let pop = read_zones("zone_id,population\nz,5\n".as_bytes()).unwrap();
        assert_eq!(pop.zones()[0].centroid, None);

        assert!(read_zones("id,pop\nz,5\n".as_bytes()).is_err());
    }

    #[test]
    fn deltas_columns_mapped_to_canonical_order() {
        let pop = read_zones("zone_id,population\na,100\nb,100\n".as_bytes()).unwrap();
        let src = "date,b,a\n2014-03-01,1,2\n2014-03-02,3,4\n";
        let s = read_deltas(src.as_bytes(), &pop, 0.2).unwrap();
        assert_eq!(s.deltas(), array![[2.0, 1.0], [4.0, 3.0]]);
        assert_eq!(s.day0(), "2014-03-01");
        assert!(read_deltas("date,a,c\nd,1,1\n".as_bytes(), &pop, 0.2).is_err());
        assert!(read_deltas("date,a,a\nd,1,1\n".as_bytes(), &pop, 0.2).is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
        assert!(read_matrix("1,2,3\n4,5,6\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_format() {
        let mut buf = Vec::new();
        write_trace(&[2.0, 1.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,objective\n0,2.0\n1,1.5\n");
    }
}
