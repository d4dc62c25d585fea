#![allow(dead_code)]

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::{Command, Output};

use tablesearch::corpus::write_corpus;
use tablesearch::synth::{generate, Collection, SynthConfig};

/// A small generated collection written to disk in the CLI's input formats.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub collection: Collection,
}

impl Fixture {
    pub fn new() -> Self {
        let cfg = SynthConfig {
            topics: 4,
            tables_per_topic: 8,
            entities_per_topic: 8,
            queries_per_topic: 2,
            inputs_per_topic: 2,
            dim: 8,
            seed: 3,
            ..Default::default()
        };
        let collection = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir, collection };
        let c = &f.collection;
        write_corpus(&c.tables, BufWriter::new(File::create(f.path("corpus.jsonl")).unwrap())).unwrap();
        c.kb.dump(File::create(f.path("entities.jsonl")).unwrap(), File::create(f.path("links.tsv")).unwrap())
            .unwrap();
        c.word.write(BufWriter::new(File::create(f.path("words.txt")).unwrap())).unwrap();
        c.graph.write(BufWriter::new(File::create(f.path("graph.txt")).unwrap())).unwrap();
        let queries: String = c.queries.iter().map(|(id, q)| format!("{id}\t{q}\n")).collect();
        fs::write(f.path("queries.tsv"), queries).unwrap();
        c.search_qrels.write(File::create(f.path("search.qrels")).unwrap()).unwrap();
        c.match_qrels.write(File::create(f.path("match.qrels")).unwrap()).unwrap();
        let inputs: Vec<_> = c.inputs.iter().map(|(_, t)| t.clone()).collect();
        write_corpus(&inputs, File::create(f.path("inputs.jsonl")).unwrap()).unwrap();
        f
    }

    /// Fixture with an index already built.
    pub fn indexed() -> Self {
        let f = Fixture::new();
        let out = f.run(&["build-index", "--corpus", &f.arg("corpus.jsonl"), "--index", &f.arg("index")]);
        assert!(out.status.success(), "{}", stderr(&out));
        f
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Flags for the index and every store.
    pub fn stores(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (flag, name) in [
            ("--index", "index"),
            ("--kb", "entities.jsonl"),
            ("--outlinks", "links.tsv"),
            ("--word-emb", "words.txt"),
            ("--graph-emb", "graph.txt"),
        ] {
            v.push(flag.to_owned());
            v.push(self.arg(name));
        }
        v
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tablesearch")).args(args).output().unwrap()
    }

    pub fn run_with_stores(&self, args: &[&str]) -> Output {
        let mut all = self.stores();
        all.extend(args.iter().map(|a| a.to_string()));
        Command::new(env!("CARGO_BIN_EXE_tablesearch")).args(&all).output().unwrap()
    }

    /// Writes features for `method` and trains a small model on them.
    pub fn train(&self, method: &str, inputs: (&str, &str), qrels: &str) -> PathBuf {
        let out = self.run_with_stores(&["features", "--method", method, inputs.0, &self.arg(inputs.1), "--qrels", &self.arg(qrels)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let data = format!("{method}.features.tsv");
        fs::write(self.path(&data), &out.stdout).unwrap();
        let model = self.path(&format!("{method}.model.json"));
        let out = self.run(&[
            "train",
            "--data",
            &self.arg(&data),
            "--method",
            method,
            "--out",
            model.to_str().unwrap(),
            "--trees",
            "20",
            "--seed",
            "1",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        model
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}
