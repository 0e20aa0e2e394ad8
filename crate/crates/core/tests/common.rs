#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bilingo_core::config::{load_inputs, Config, Loaded};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load_sample() -> Loaded {
    let root = fixtures().join("sample");
    let cfg = Config::load(&root.join("config.toml")).unwrap();
    load_inputs(&root.join("treebank"), &root.join("lexicon.tsv"), &cfg).unwrap()
}

pub fn course_config() -> Config {
    Config::load(&fixtures().join("course/course.toml")).unwrap()
}

pub fn load_course() -> Loaded {
    let root = fixtures().join("course");
    load_inputs(&root.join("treebank"), &root.join("lexicon.tsv"), &course_config()).unwrap()
}
