//! CSV exports of embeddings, clusterings and survivor tables.

use std::io::Write;

use dreamspace_core::cluster::ClusterTree;
use dreamspace_core::reduce::Embedding;
use dreamspace_core::{Channel, SolutionSpace};

use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Internal(e.to_string())
}

/// Coordinates are written in shortest round-trip form.
fn coords(e: &Embedding, row: usize) -> [String; 3] {
    [0, 1, 2].map(|j| e.coords.get(row, j).to_string())
}

fn check_rows(members: &[usize], e: &Embedding) -> Result<()> {
    if e.len() != members.len() || e.coords.cols() != 3 {
        return Err(Error::Internal(format!(
            "embedding has {}x{} coordinates for {} solutions",
            e.len(),
            e.coords.cols(),
            members.len()
        )));
    }
    Ok(())
}

/// `id,x,y,z` per member.
pub fn write_embedding<W: Write>(space: &SolutionSpace, members: &[usize], e: &Embedding, out: W) -> Result<()> {
    check_rows(members, e)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "x", "y", "z"]).map_err(csv_err)?;
    for (row, &i) in members.iter().enumerate() {
        let [x, y, z] = coords(e, row);
        w.write_record([space.solution(i).id.as_str(), &x, &y, &z]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))
}

/// `id,cluster,representative` per member of every root cluster.
pub fn write_clusters<W: Write>(space: &SolutionSpace, tree: &ClusterTree, out: W) -> Result<()> {
    let mut rows: Vec<(usize, &str, bool)> = Vec::new();
    for c in &tree.roots {
        for &m in &c.members {
            rows.push((m, c.id.as_str(), m == c.representative));
        }
    }
    rows.sort_by_key(|r| r.0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "cluster", "representative"]).map_err(csv_err)?;
    for (m, cluster, rep) in rows {
        w.write_record([space.solution(m).id.as_str(), cluster, if rep { "true" } else { "false" }])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))
}

/// Column names of the survivor table.
pub fn survivor_header() -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(Channel::ALL.iter().map(|c| c.name().to_string()));
    h.extend(["x", "y", "z"].map(String::from));
    h
}

/// One row per survivor: id, every property channel, embedding coordinates.
pub fn write_survivors<W: Write>(space: &SolutionSpace, survivors: &[usize], e: &Embedding, out: W) -> Result<()> {
    check_rows(survivors, e)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(survivor_header()).map_err(csv_err)?;
    for (row, &i) in survivors.iter().enumerate() {
        let s = space.solution(i);
        let mut rec = vec![s.id.clone()];
        rec.extend(Channel::ALL.iter().map(|c| s.properties.get(*c).to_string()));
        rec.extend(coords(e, row));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))
}
