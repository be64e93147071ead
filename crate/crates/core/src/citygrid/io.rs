//! JSON-lines dataset files.
//!
//! Line 1 is a header carrying the format version, category table and grid
//! constants; every following line is one region. Edges are written as
//! directed pairs, both directions present, so that a hand-edited file with a
//! missing reverse edge is caught on load.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CategoryTable, Dataset, FacilityCategory, Provenance, Region, RegionRecord, WalkingGraph};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "fairlayout-dataset";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(rename = "K_cat")]
    k_cat: usize,
    #[serde(rename = "N_max")]
    n_max: usize,
    grid_size_m: f64,
    walk_threshold_m: f64,
    city_cols: usize,
    feature_dim: usize,
    regions: usize,
    categories: Vec<FacilityCategory>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeLine {
    cat: usize,
    x_m: Option<f64>,
    y_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionLine {
    region_id: usize,
    attributes: Vec<f64>,
    demand: Vec<u8>,
    population: u64,
    elderly_population: u64,
    nodes: Vec<NodeLine>,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Serializes a dataset into the JSON-lines format.
pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        k_cat: ds.k_cat(),
        n_max: ds.n_max,
        grid_size_m: ds.grid_size_m,
        walk_threshold_m: ds.walk_threshold_m,
        city_cols: ds.city_cols,
        feature_dim: ds.feature_dim,
        regions: ds.regions.len(),
        categories: ds.categories.clone().into(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    for r in &ds.regions {
        let g = &r.graph;
        let n = g.n();
        let nodes = (0..n)
            .map(|i| NodeLine {
                cat: g.category(i),
                x_m: g.positions().map(|p| p[i][0]),
                y_m: g.positions().map(|p| p[i][1]),
            })
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if g.has_edge(i, j) {
                    edges.push([i, j]);
                }
            }
        }
        let line = RegionLine {
            region_id: r.record.region_id,
            attributes: r.record.urban_attributes.clone(),
            demand: r.record.demand.clone(),
            population: r.record.population,
            elderly_population: r.record.elderly_population,
            nodes,
            edges,
            features: r.record.grid_features.clone(),
            provenance: r.provenance.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Writes through a temporary file and renames, so readers never observe a
/// half-written dataset.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("jsonl.partial");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        write_dataset(ds, &mut f)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses and validates a dataset. Either the whole file is accepted or an
/// error is returned; no partial dataset is produced.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse_err(1, e))?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    let categories = CategoryTable::new(header.categories)?;
    if categories.len() != header.k_cat {
        return Err(Error::Format(format!(
            "header K_cat {} but {} categories",
            header.k_cat,
            categories.len()
        )));
    }
    let mut regions = Vec::with_capacity(header.regions);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rl: RegionLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e))?;
        let n = rl.nodes.len();
        let mut adjacency = vec![false; n * n];
        for &[i, j] in &rl.edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!(
                    "line {lineno}, region {}: edge ({i}, {j}) out of range",
                    rl.region_id
                )));
            }
            adjacency[i * n + j] = true;
        }
        for i in 0..n {
            for j in 0..n {
                if adjacency[i * n + j] && !adjacency[j * n + i] {
                    return Err(Error::Validation(format!(
                        "line {lineno}, region {}: asymmetric adjacency, edge ({i}, {j}) has no reverse ({j}, {i})",
                        rl.region_id
                    )));
                }
            }
        }
        let positions = match rl.nodes.iter().map(|nd| nd.x_m.zip(nd.y_m)).collect::<Option<Vec<_>>>() {
            Some(p) => Some(p.into_iter().map(|(x, y)| [x, y]).collect()),
            None if rl.nodes.iter().all(|nd| nd.x_m.is_none() && nd.y_m.is_none()) => None,
            None => {
                return Err(Error::Validation(format!(
                    "line {lineno}, region {}: coordinates missing on some nodes only",
                    rl.region_id
                )))
            }
        };
        let cats = rl.nodes.iter().map(|nd| nd.cat).collect();
        let graph = WalkingGraph::from_parts(header.n_max, header.k_cat, cats, adjacency, positions)
            .map_err(|e| Error::Validation(format!("line {lineno}, region {}: {e}", rl.region_id)))?;
        regions.push(Region {
            record: RegionRecord {
                region_id: rl.region_id,
                urban_attributes: rl.attributes,
                demand: rl.demand,
                grid_features: rl.features,
                population: rl.population,
                elderly_population: rl.elderly_population,
            },
            graph,
            provenance: rl.provenance,
        });
    }
    if regions.len() != header.regions {
        return Err(parse_err(
            regions.len() + 2,
            format!("expected {} regions, file ends after {}", header.regions, regions.len()),
        ));
    }
    let ds = Dataset {
        categories,
        n_max: header.n_max,
        grid_size_m: header.grid_size_m,
        walk_threshold_m: header.walk_threshold_m,
        city_cols: header.city_cols,
        feature_dim: header.feature_dim,
        regions,
    };
    ds.validate()?;
    Ok(ds)
}
