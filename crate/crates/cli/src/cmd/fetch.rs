use std::io::Write;
use std::path::Path;

use anchorscope::model::ModelId;
use anyhow::{Context, Result};
use clap::Args;
use log::info;

use crate::data::cache_root;

pub const FILES: [&str; 4] = [
    "config.json",
    "model.safetensors",
    "vocab.json",
    "merges.txt",
];

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// small, medium, large or xl.
    #[arg(long, default_value = "small")]
    pub model: ModelId,
    /// Hub mirror serving `<base>/<repo>/resolve/<revision>/<file>`.
    #[arg(long, default_value = "https://huggingface.co")]
    pub base_url: String,
    #[arg(long, default_value = "main")]
    pub revision: String,
    /// Download again even if the files exist.
    #[arg(long)]
    pub force: bool,
}

fn download(url: &str, dest: &Path) -> Result<u64> {
    let resp = ureq::get(url)
        .call()
        .with_context(|| format!("GET {url}"))?;
    let tmp = dest.with_extension("partial");
    let result = (|| -> Result<u64> {
        let mut file =
            std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        let n = std::io::copy(&mut resp.into_reader(), &mut file)
            .with_context(|| format!("downloading {url}"))?;
        file.flush()?;
        std::fs::rename(&tmp, dest)?;
        Ok(n)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn run(args: &FetchArgs) -> Result<()> {
    let repo = args.model.hub_name();
    let dir = cache_root().join(repo);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let base = args.base_url.trim_end_matches('/');
    for f in FILES {
        let dest = dir.join(f);
        if dest.is_file() && !args.force {
            info!("{} already present", dest.display());
            continue;
        }
        let url = format!("{base}/{repo}/resolve/{}/{f}", args.revision);
        let n = download(&url, &dest)?;
        println!("{} ({n} bytes)", dest.display());
    }
    println!("{repo} ready in {}", dir.display());
    Ok(())
}
