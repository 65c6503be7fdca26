//! Dataset download with checksum verification.

use std::fs;
use std::path::Path;

use md5::{Digest, Md5};
use nirmal_core::{Error, Result};

pub struct RemoteFile {
    pub name: &'static str,
    pub md5: &'static str,
}

pub struct RemoteDataset {
    pub name: &'static str,
    pub base_url: &'static str,
    pub files: [RemoteFile; 4],
}

pub const MNIST: RemoteDataset = RemoteDataset {
    name: "mnist",
    base_url: "https://ossci-datasets.s3.amazonaws.com/mnist/",
    files: [
        RemoteFile { name: "train-images-idx3-ubyte.gz", md5: "f68b3c2dcbeaaa9fbdd348bbdeb94873" },
        RemoteFile { name: "train-labels-idx1-ubyte.gz", md5: "d53e105ee54ea40749a09fcbcd1e9432" },
        RemoteFile { name: "t10k-images-idx3-ubyte.gz", md5: "9fb629c4189551a2d022fa330f9573f3" },
        RemoteFile { name: "t10k-labels-idx1-ubyte.gz", md5: "ec29112dd5afa0611ce80d1b7f02629c" },
    ],
};

pub const FASHION: RemoteDataset = RemoteDataset {
    name: "fashion",
    base_url: "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    files: [
        RemoteFile { name: "train-images-idx3-ubyte.gz", md5: "8d4fb7e6c68d591d4c3dfef9ec88bf0d" },
        RemoteFile { name: "train-labels-idx1-ubyte.gz", md5: "25c81989df183df01b3e8a0aad5dffbe" },
        RemoteFile { name: "t10k-images-idx3-ubyte.gz", md5: "bef4ecab320f06d8554ea6380940ec79" },
        RemoteFile { name: "t10k-labels-idx1-ubyte.gz", md5: "bb300cfdad3c16e7a12a480ee83cd310" },
    ],
};

fn md5_hex(bytes: &[u8]) -> String {
    let mut hasher = Md5::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn io_other(msg: String) -> Error {
    Error::Io(std::io::Error::other(msg))
}

/// Downloads every file of `ds` into `data_dir`, skipping files already
/// present with a matching checksum. A checksum mismatch on a downloaded
/// body is an error; nothing is written in that case.
pub fn fetch_dataset(ds: &RemoteDataset, data_dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(data_dir)?;
    let mut report = Vec::with_capacity(ds.files.len());
    for file in &ds.files {
        let dest = data_dir.join(file.name);
        if dest.exists() && md5_hex(&fs::read(&dest)?) == file.md5 {
            report.push(format!("{} already present, checksum ok", file.name));
            continue;
        }
        let url = format!("{}{}", ds.base_url, file.name);
        let resp = reqwest::blocking::get(&url).map_err(|e| io_other(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(io_other(format!("{url}: HTTP {}", resp.status())));
        }
        let body = resp
            .bytes()
            .map_err(|e| io_other(format!("{url}: {e}")))?;
        let got = md5_hex(&body);
        if got != file.md5 {
            return Err(io_other(format!(
                "{}: checksum mismatch (expected {}, got {got})",
                file.name, file.md5
            )));
        }
        fs::write(&dest, &body)?;
        report.push(format!("{} downloaded, checksum ok", file.name));
    }
    Ok(report)
}
