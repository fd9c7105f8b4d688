//! Proposal files: a JSON array of proposals.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::InstanceProposal;

pub fn proposals_to_string(props: &[InstanceProposal]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(props).map_err(|e| Error::invalid(format!("proposal encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates proposals; indices are checked when `scene_len` is given.
pub fn proposals_from_str(what: &str, text: &str, scene_len: Option<usize>) -> Result<Vec<InstanceProposal>> {
    let props: Vec<InstanceProposal> =
        serde_json::from_str(text).map_err(|e| Error::load(what, format!("malformed proposals: {e}")))?;
    for (i, p) in props.iter().enumerate() {
        p.validate(scene_len.unwrap_or(usize::MAX))
            .map_err(|e| Error::load(what, format!("proposal {i}: {e}")))?;
    }
    Ok(props)
}

pub fn save_proposals(props: &[InstanceProposal], path: &Path) -> Result<()> {
    std::fs::write(path, proposals_to_string(props)?)?;
    Ok(())
}

pub fn load_proposals(path: &Path, scene_len: Option<usize>) -> Result<Vec<InstanceProposal>> {
    let what = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(&what, e.to_string()))?;
    proposals_from_str(&what, &text, scene_len)
}
