mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use weakalign::alignment::Segmentation;
use weakalign::captions::CaptionSource;
use weakalign::cli::{
    cmd_align, cmd_eval, cmd_mine, cmd_mine_eval, cmd_synth, generate, mine_tracks, AlignInputs, Decoder,
    PipelineConfig, SynthConfig,
};
use weakalign::hierarchy::{ConsensusMode, ConsensusScope};
use weakalign::metrics::Pooling;
use weakalign::mining::{evaluate_mining, MinedInstance, MiningReport, MiningStrategy};
use weakalign::ClassId;

const VOCAB: &str = r#"[
  {"id": 1, "verb": "crack", "object": "egg"},
  {"id": 2, "verb": "chop", "object": null},
  {"id": 3, "verb": "chop", "object": "onion"},
  {"id": 4, "verb": "add", "object": "oil", "object_synonyms": ["butter"]}
]"#;

fn write(dir: &Path, name: &str, text: &str) {
    let path = dir.join(name);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

/// Three caption files with five planted matches. Neighbor matching finds
/// two of them, ordered matching four.
fn caption_fixture(dir: &Path) {
    write(
        dir,
        "captions/a.vtt",
        "WEBVTT\n\n00:00:01.000 --> 00:00:04.000\nNow we crack three eggs\n\n\
         00:00:05.000 --> 00:00:07.000\nhello everyone\n\n00:00:08.000 --> 00:00:09.500\nadd butter now\n",
    );
    write(
        dir,
        "captions/b.srt",
        "1\n00:00:02,000 --> 00:00:03,000\nchop the onion\n\n2\n00:00:04,000 --> 00:00:06,000\nthanks for watching\n",
    );
    write(
        dir,
        "captions/c.edited.vtt",
        "WEBVTT\n\n00:00:00.500 --> 00:00:02.000\nthe onion, chop it\n\n00:00:03.000 --> 00:00:04.000\n<c>just chop it</c>\n",
    );
    write(dir, "vocab.json", VOCAB);
}

fn mine(dir: &Path, strategy: MiningStrategy) -> weakalign::cli::MineOutcome {
    let cfg = PipelineConfig {
        strategy,
        ..Default::default()
    };
    cmd_mine(
        &dir.join("captions"),
        &dir.join("vocab.json"),
        CaptionSource::Auto,
        &cfg,
        &dir.join(format!("{}.tsv", strategy.name())),
        &dir.join(format!("{}.json", strategy.name())),
    )
    .unwrap()
}

fn pairs(instances: &[MinedInstance]) -> BTreeSet<(String, ClassId, usize)> {
    instances
        .iter()
        .map(|i| (i.video_id.clone(), i.class_id, i.source_cue_index))
        .collect()
}

#[test]
fn mine_finds_planted_matches() {
    let dir = tempfile::tempdir().unwrap();
    caption_fixture(dir.path());
    let scrambled = mine(dir.path(), MiningStrategy::Scrambled);
    let expected: BTreeSet<(String, ClassId, usize)> = [
        ("a", 1, 0),
        ("a", 4, 2),
        ("b", 3, 0),
        ("c", 3, 0),
        ("c", 2, 1),
    ]
    .into_iter()
    .map(|(v, c, i)| (v.to_string(), c, i))
    .collect();
    assert_eq!(pairs(&scrambled.instances), expected);
    assert_eq!(scrambled.summary.n_action_instances, 5);
    // floor(0.1 * 5) background samples
    assert_eq!(scrambled.summary.n_background, 0);
    assert!(scrambled.summary.errors.is_empty());
    assert_eq!(scrambled.summary.per_strategy["scrambled"], 5);
    assert_eq!(scrambled.summary.per_strategy["ordered"], 4);
    assert_eq!(scrambled.summary.per_strategy["neighbor"], 2);

    let neighbor = mine(dir.path(), MiningStrategy::Neighbor);
    let ordered = mine(dir.path(), MiningStrategy::Ordered);
    assert!(pairs(&neighbor.instances).is_subset(&pairs(&ordered.instances)));
    assert!(pairs(&ordered.instances).is_subset(&pairs(&scrambled.instances)));
    assert_eq!(neighbor.instances.len(), 2);

    let written = fs::read_to_string(dir.path().join("scrambled.tsv")).unwrap();
    assert_eq!(written.lines().count(), 5);
    assert!(written.contains("a\t1\t1\t4\t0"));
}

#[test]
fn mine_reports_bad_files_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    caption_fixture(dir.path());
    write(dir.path(), "captions/broken.vtt", "WEBVTT\n\n00:00:0x.000 --> 00:00:02.000\ncrack egg\n");
    let out = mine(dir.path(), MiningStrategy::Scrambled);
    assert_eq!(out.summary.errors.len(), 1);
    assert!(out.summary.errors[0].item.ends_with("broken.vtt"));
    assert_eq!(out.summary.n_action_instances, 5);
}

#[test]
fn mine_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("captions")).unwrap();
    write(dir.path(), "vocab.json", VOCAB);
    let out = mine(dir.path(), MiningStrategy::Scrambled);
    assert!(out.instances.is_empty());
    assert_eq!(out.summary.n_videos, 0);
    assert_eq!(fs::read_to_string(dir.path().join("scrambled.tsv")).unwrap(), "");
}

/// Per-frame recount of the mining report.
fn mining_oracle(instances: &[MinedInstance], gt: &BTreeMap<String, Segmentation>, fps: f64) -> MiningReport {
    let (mut detected, mut correct) = (0u64, 0u64);
    let (mut iod, mut iou, mut hits) = (0.0, 0.0, 0.0);
    for (video, seg) in gt {
        let labels = seg.frame_labels();
        let mut by_class: BTreeMap<ClassId, BTreeSet<usize>> = BTreeMap::new();
        for i in instances.iter().filter(|i| &i.video_id == video) {
            let frames = by_class.entry(i.class_id).or_default();
            for f in 0..labels.len() {
                let lo = (i.start * fps).floor() as usize;
                let hi = (i.end * fps).floor() as usize;
                if lo <= f && f < hi {
                    frames.insert(f);
                }
            }
        }
        let (mut inter, mut det, mut uni) = (0u64, 0u64, 0u64);
        for (class, frames) in &by_class {
            for f in 0..labels.len() {
                let g = labels[f] == *class;
                let d = frames.contains(&f);
                inter += u64::from(g && d);
                det += u64::from(d);
                uni += u64::from(g || d);
            }
        }
        detected += det;
        correct += inter;
        if det > 0 {
            iod += inter as f64 / det as f64;
        }
        if uni > 0 {
            iou += inter as f64 / uni as f64;
        }
        if inter > 0 {
            hits += 1.0;
        }
    }
    let n = gt.len() as f64;
    MiningReport {
        frames_detected: detected,
        frames_correct: correct,
        jaccard_iod: iod / n,
        jaccard_iou: iou / n,
        frame_hitrate: hits / n,
    }
}

#[test]
fn mining_report_matches_frame_recount() {
    let corpus = generate(&SynthConfig {
        videos: 50,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let tracks: Vec<_> = corpus.videos.iter().map(|v| v.captions.clone()).collect();
    let n_cues: usize = tracks.iter().map(|t| t.cues.len()).sum();
    assert!(n_cues >= 200, "{n_cues} cues");
    let gt: BTreeMap<String, Segmentation> = corpus.videos.iter().map(|v| (v.id.clone(), v.gt.clone())).collect();
    for strategy in MiningStrategy::ALL {
        let cfg = PipelineConfig {
            strategy,
            ..Default::default()
        };
        let (instances, _) = mine_tracks(&tracks, &corpus.vocab, &cfg);
        let got = evaluate_mining(&instances, &gt, 30.0).unwrap();
        let want = mining_oracle(&instances, &gt, 30.0);
        assert_eq!((got.frames_detected, got.frames_correct), (want.frames_detected, want.frames_correct));
        assert!((got.jaccard_iod - want.jaccard_iod).abs() < 1e-12);
        assert!((got.jaccard_iou - want.jaccard_iou).abs() < 1e-12);
        assert!((got.frame_hitrate - want.frame_hitrate).abs() < 1e-12);
        assert!(got.jaccard_iou <= got.jaccard_iod && got.frames_correct <= got.frames_detected);
        // captions name the action inside its segment, so most mined frames are right
        assert!(got.frames_correct * 2 > got.frames_detected, "{got:?}");
    }
}

fn synth_dir(noise: f64, structured: bool) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        videos: 6,
        noise,
        structured,
        seed: 11,
        ..Default::default()
    };
    cmd_synth(&cfg, dir.path()).unwrap();
    dir
}

fn align(dir: &Path, inputs: &AlignInputs, cfg: &PipelineConfig, out: &str) -> weakalign::cli::AlignOutcome {
    cmd_align(&dir.join("probs"), &dir.join("transcripts"), inputs, cfg, &dir.join(out)).unwrap()
}

#[test]
fn noise_free_corpus_aligns_almost_perfectly() {
    let dir = synth_dir(0.0, false);
    let cfg = PipelineConfig::default();
    let out = align(dir.path(), &AlignInputs::default(), &cfg, "aligned");
    assert_eq!(out.written.len(), 6);
    let report = cmd_eval(&dir.path().join("gt"), &dir.path().join("aligned"), &cfg).unwrap();
    assert!(report.mean_iou >= 0.95, "{}", report.mean_iou);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = synth_dir(0.2, false);
    let cfg = PipelineConfig::default();
    let report = cmd_eval(&dir.path().join("gt"), &dir.path().join("gt"), &cfg).unwrap();
    assert_eq!((report.mean_iou, report.mean_iod, report.n_videos), (1.0, 1.0, 6));
}

#[test]
fn full_noise_removes_the_signal() {
    let corpus = generate(&SynthConfig {
        noise: 1.0,
        ..Default::default()
    })
    .unwrap();
    let (mut true_mass, mut frames) = (0.0, 0usize);
    for v in &corpus.videos {
        for (t, &label) in v.gt.frame_labels().iter().enumerate() {
            true_mass += v.posteriors.get(t, label as usize);
            frames += 1;
        }
    }
    // the true class gets the same share as any other class
    let mean = true_mass / frames as f64;
    assert!((mean - 0.1).abs() < 0.01, "{mean}");
}

#[test]
fn missing_matrix_is_reported_per_video() {
    let dir = synth_dir(0.2, false);
    fs::remove_file(dir.path().join("probs/vid001.pmat")).unwrap();
    // an impossible transcript: more entries than grid intervals
    write(dir.path(), "transcripts/vid002.txt", &"1\n2\n".repeat(15));
    let out = align(dir.path(), &AlignInputs::default(), &PipelineConfig::default(), "aligned");
    assert_eq!(out.written.len(), 4);
    let failed: Vec<&str> = out.errors.iter().map(|e| e.item.as_str()).collect();
    assert_eq!(failed, vec!["vid001", "vid002"]);
    assert!(out.errors[0].message.contains("no probability matrix"));
    assert!(out.errors[1].message.contains("intervals"), "{}", out.errors[1].message);
    assert!(!dir.path().join("aligned/vid001.tsv").exists());
}

#[test]
fn csv_matrices_are_accepted() {
    let dir = synth_dir(0.2, false);
    let bin = dir.path().join("probs/vid000.pmat");
    let m = weakalign::alignment::ProbMatrix::from_pmat_bytes("vid000", &fs::read(&bin).unwrap()).unwrap();
    fs::remove_file(&bin).unwrap();
    write(dir.path(), "probs/vid000.csv", &m.to_csv());
    let out = align(dir.path(), &AlignInputs::default(), &PipelineConfig::default(), "aligned");
    assert!(out.errors.is_empty(), "{:?}", out.errors);
}

#[test]
fn consensus_and_baselines_run_end_to_end() {
    let dir = synth_dir(0.4, true);
    let p = dir.path();
    let mut cfg = PipelineConfig::default();
    let with_hierarchy = AlignInputs {
        hierarchy: Some(p.join("hierarchy.tsv")),
        vocab: Some(p.join("vocab.json")),
        ..Default::default()
    };
    assert!(align(p, &with_hierarchy, &cfg, "off").errors.is_empty());
    cfg.consensus = ConsensusMode::Combined(ConsensusScope::Full);
    assert!(align(p, &with_hierarchy, &cfg, "combined").errors.is_empty());
    cfg.consensus = ConsensusMode::Off;

    for decoder in [Decoder::Uniform, Decoder::Random] {
        let inputs = AlignInputs {
            decoder,
            ..Default::default()
        };
        let out = align(p, &inputs, &cfg, "baseline");
        assert_eq!(out.written.len(), 6);
        let report = cmd_eval(&p.join("gt"), &p.join("baseline"), &cfg).unwrap();
        assert!(report.mean_iou < 0.9);
    }

    // subtitle labels do not follow the transcript, so they are scored per frame set
    let subtitle = AlignInputs {
        decoder: Decoder::Subtitle,
        vocab: Some(p.join("vocab.json")),
        captions: Some(p.join("captions")),
        ..Default::default()
    };
    assert!(align(p, &subtitle, &cfg, "subtitle").errors.is_empty());
    cfg.pooling = Pooling::FrameSet;
    let report = cmd_eval(&p.join("gt"), &p.join("subtitle"), &cfg).unwrap();
    assert!(report.mean_iod > 0.5, "{report:?}");
}

#[test]
fn consensus_without_hierarchy_is_a_config_error() {
    let dir = synth_dir(0.2, false);
    let cfg = PipelineConfig {
        consensus: ConsensusMode::TopDown(ConsensusScope::Pairwise),
        ..Default::default()
    };
    let err = cmd_align(
        &dir.path().join("probs"),
        &dir.path().join("transcripts"),
        &AlignInputs::default(),
        &cfg,
        &dir.path().join("out"),
    );
    assert!(err.is_err());
}

#[test]
fn mined_priors_feed_alignment() {
    let dir = synth_dir(0.2, false);
    let p = dir.path();
    let cfg = PipelineConfig::default();
    cmd_mine(
        &p.join("captions"),
        &p.join("vocab.json"),
        CaptionSource::Auto,
        &cfg,
        &p.join("instances.tsv"),
        &p.join("summary.json"),
    )
    .unwrap();
    let inputs = AlignInputs {
        instances: Some(p.join("instances.tsv")),
        ..Default::default()
    };
    let out = align(p, &inputs, &cfg, "aligned");
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    let report = cmd_mine_eval(&p.join("instances.tsv"), &p.join("gt"), &cfg).unwrap();
    assert!(report.frame_hitrate > 0.5);
}
