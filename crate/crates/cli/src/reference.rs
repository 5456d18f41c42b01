use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use stainforge::baselines::{macenko_fit, reinhard_fit, ReinhardStats, StainBasis};
use stainforge::raster::read_raster;
use stainforge::decode_u8;

use crate::common::{CmdResult, OrExit, Status};
use crate::BaselineKind;

/// Fitted reference as stored on disk by `fit-reference`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Reference {
    Reinhard { stats: ReinhardStats },
    Macenko { basis: StainBasis },
}

pub fn fit(image: &Path, kind: BaselineKind) -> anyhow::Result<Reference> {
    let img = decode_u8(&read_raster(image)?);
    Ok(match kind {
        BaselineKind::Reinhard => Reference::Reinhard { stats: reinhard_fit(&img) },
        BaselineKind::Macenko => Reference::Macenko {
            basis: macenko_fit(&img).with_context(|| format!("fitting stain basis on {}", image.display()))?,
        },
    })
}

/// Loads a reference from JSON, or fits one on an image.
pub fn load(path: &Path, kind: BaselineKind) -> anyhow::Result<Reference> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return fit(path, kind);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let reference: Reference =
        serde_json::from_str(&text).with_context(|| format!("parsing reference {}", path.display()))?;
    let matches = matches!(
        (&reference, kind),
        (Reference::Reinhard { .. }, BaselineKind::Reinhard) | (Reference::Macenko { .. }, BaselineKind::Macenko)
    );
    anyhow::ensure!(matches, "{} was fitted for a different method", path.display());
    Ok(reference)
}

pub fn run(image: &Path, kind: BaselineKind, output: &Path) -> CmdResult {
    let reference = fit(image, kind).config()?;
    let text = serde_json::to_string_pretty(&reference).failed()?;
    std::fs::write(output, text + "\n")
        .with_context(|| format!("writing {}", output.display()))
        .failed()?;
    println!("wrote {}", output.display());
    Ok(Status::Success)
}
