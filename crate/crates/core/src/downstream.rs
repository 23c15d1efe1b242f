//! Small-classifier benchmark comparing training-set compositions.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::augmentor::{augment_single_to_multi, repeat_baseline, AugJob, LabelPolicy, Mode};
use crate::error::{Error, Result};
use crate::io::{atomic_write, load_image, render_image, save_image, ImageSet, ShapeKind, TextureKind};
use crate::nn::{Conv, Graph, Group, GroupSet, Init, ParamId, ParamStore};
use crate::tensor::{mix_seed, PadMode, Rng, Tensor, Var};
use crate::trainer::{augment_input, resize_bilinear, TrainConfig};

/// How the training set is assembled from the available data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Composition {
    /// Majority plus the lone minority images.
    Baseline,
    /// Minority images cycled up to the majority count.
    Repeat,
    /// Majority, minority and the translated minority-class images.
    Sitta,
    /// Majority, translated images and the minority repeated to the same count.
    SittaPlusRepeat,
}

impl Composition {
    pub const ALL: [Composition; 4] = [
        Composition::Baseline,
        Composition::Repeat,
        Composition::Sitta,
        Composition::SittaPlusRepeat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Composition::Baseline => "baseline",
            Composition::Repeat => "repeat",
            Composition::Sitta => "sitta",
            Composition::SittaPlusRepeat => "sitta_plus_repeat",
        }
    }

    fn needs_sitta(self) -> bool {
        matches!(self, Composition::Sitta | Composition::SittaPlusRepeat)
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Composition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Composition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "unknown composition '{s}', expected baseline, repeat, sitta or sitta_plus_repeat"
                ))
            })
    }
}

/// Three stride-2 conv blocks, global average pooling and a linear head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierSpec {
    pub widths: [usize; 3],
    pub input_side: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Starting learning rate of the cosine schedule.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            widths: [16, 32, 64],
            input_side: 64,
            epochs: 30,
            batch_size: 16,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Argument(
                "classifier widths, batch size and epochs must be positive".into(),
            ));
        }
        if self.input_side < 16 {
            return Err(Error::Argument(format!(
                "classifier input side {} is below 16",
                self.input_side
            )));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Argument("invalid classifier optimizer settings".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step` of `total` under cosine decay from `base` to 0.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return base;
    }
    let t = step as f64 / (total - 1) as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Debug)]
pub struct Classifier {
    pub spec: ClassifierSpec,
    pub classes: Vec<String>,
    pub store: ParamStore<f32>,
    blocks: [Conv; 3],
    head: Conv,
}

impl Classifier {
    pub fn new(spec: ClassifierSpec, classes: Vec<String>, seed: u64) -> Result<Self> {
        spec.validate()?;
        if classes.is_empty() {
            return Err(Error::Argument("classifier needs at least one class".into()));
        }
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let [w1, w2, w3] = spec.widths;
        let mut block = |name: &str, cin, cout, store: &mut ParamStore<f32>| {
            Conv::new(store, name, Group::Classifier, cin, cout, 3, 2, PadMode::Zero(1), Init::He, &mut rng)
        };
        let blocks = [
            block("block1", 3, w1, &mut store),
            block("block2", w1, w2, &mut store),
            block("block3", w2, w3, &mut store),
        ];
        let head = Conv::linear(&mut store, "head", Group::Classifier, w3, classes.len(), Init::He, &mut rng);
        Ok(Classifier {
            spec,
            classes,
            store,
            blocks,
            head,
        })
    }

    /// (B, K, 1, 1) logits.
    pub fn logits(&self, g: &mut Graph<f32>, x: Var) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(g, &self.store, h)?;
            h = g.tape.relu(h);
        }
        let pooled = g.tape.global_avg_pool(h);
        self.head.forward(g, &self.store, pooled)
    }

    /// Index of the highest logit for each image.
    pub fn predict(&self, images: &[Tensor]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(self.spec.batch_size.max(1)) {
            let batch = Tensor::stack(chunk)?;
            let mut g = Graph::inference();
            let x = g.input(batch);
            let l = self.logits(&mut g, x)?;
            let v = g.tape.value(l);
            let k = self.classes.len();
            for row in v.data().chunks(k) {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
                out.push(best.0);
            }
        }
        Ok(out)
    }
}

/// Images loaded and resized to the classifier input, with class indices.
pub struct LabeledTensors {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

fn load_labeled(set: &ImageSet, classes: &[String], side: usize) -> Result<LabeledTensors> {
    let mut images = Vec::with_capacity(set.len());
    let mut labels = Vec::with_capacity(set.len());
    for (p, l) in &set.items {
        let idx = classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::Protocol(format!("class '{l}' is absent from the training set")))?;
        let t = load_image(p)?;
        let t = if t.shape().h() == side && t.shape().w() == side {
            t
        } else {
            resize_bilinear(&t, side, side)?
        };
        images.push(t);
        labels.push(idx);
    }
    Ok(LabeledTensors { images, labels })
}

/// Per-epoch mean training loss.
pub type LossCurve = Vec<f64>;

/// SGD with momentum, weight decay and per-step cosine decay. Every sample
/// gets a random flip and resized crop; shuffling and augmentation draw from
/// `seed` only.
pub fn train_classifier(spec: &ClassifierSpec, train_set: &ImageSet, seed: u64) -> Result<(Classifier, LossCurve)> {
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::Protocol("training set is empty".into()));
    }
    let classes = train_set.labels();
    let data = load_labeled(train_set, &classes, spec.input_side)?;
    train_on_tensors(spec, classes, &data, seed)
}

pub fn train_on_tensors(
    spec: &ClassifierSpec,
    classes: Vec<String>,
    data: &LabeledTensors,
    seed: u64,
) -> Result<(Classifier, LossCurve)> {
    for (i, c) in classes.iter().enumerate() {
        if !data.labels.contains(&i) {
            return Err(Error::Protocol(format!("class '{c}' has no training example")));
        }
    }
    let mut clf = Classifier::new(*spec, classes, mix_seed(seed, 0x636c66))?;
    let mut rng = Rng::new(seed).fork(1);
    let n = data.images.len();
    let steps_per_epoch = n.div_ceil(spec.batch_size);
    let total = steps_per_epoch * spec.epochs;
    let ids: Vec<ParamId> = clf.store.iter().map(|(id, _)| id).collect();
    let mut velocity: Vec<Tensor> = ids
        .iter()
        .map(|&id| Tensor::zeros(clf.store.get(id).value.shape()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(spec.epochs);
    let mut step = 0;
    for _ in 0..spec.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            let mut views = Vec::with_capacity(chunk.len());
            for &i in chunk {
                views.push(augment_input(&data.images[i], &mut rng, spec.input_side)?);
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut g = Graph::new(GroupSet::of(&[Group::Classifier]));
            let x = g.input(Tensor::stack(&views)?);
            let logits = clf.logits(&mut g, x)?;
            let loss = g.tape.cross_entropy(logits, &labels)?;
            let lv = g.tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::NonFinite {
                    iter: step,
                    component: "classifier",
                });
            }
            epoch_loss += lv * chunk.len() as f64;
            let mut grads = g.tape.backward(loss)?;
            let pg = g.param_grads(&clf.store, &mut grads);
            let lr = cosine_lr(spec.lr, step, total);
            for (id, grad) in pg {
                let k = id.index();
                let p = clf.store.value_mut(id);
                let v = &mut velocity[k];
                for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(grad.data()) {
                    let d = gv + spec.weight_decay as f32 * *pv;
                    *vv = spec.momentum as f32 * *vv + d;
                    *pv -= lr as f32 * *vv;
                }
            }
            step += 1;
        }
        curve.push(epoch_loss / n as f64);
    }
    Ok((clf, curve))
}

/// Fraction of correctly classified items.
pub fn accuracy(clf: &Classifier, data: &LabeledTensors) -> Result<f64> {
    if data.images.is_empty() {
        return Err(Error::Protocol("empty evaluation set".into()));
    }
    let pred = clf.predict(&data.images)?;
    let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.images.len() as f64)
}

/// Fixed settings shared by every compared composition.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchProtocol {
    pub compositions: Vec<Composition>,
    pub classifier: ClassifierSpec,
    pub seeds: Vec<u64>,
}

/// Inputs of a long-tailed benchmark.
#[derive(Clone, Debug)]
pub struct BenchData {
    pub majority: ImageSet,
    pub minority: ImageSet,
    /// Minority-class images generated by translation.
    pub sitta: Option<ImageSet>,
    pub test: ImageSet,
}

impl BenchData {
    /// Training set for `c`.
    pub fn compose(&self, c: Composition) -> Result<ImageSet> {
        let mut set = ImageSet::new(c.name());
        set.items.extend(self.majority.items.iter().cloned());
        let sitta = || {
            self.sitta
                .as_ref()
                .ok_or_else(|| Error::Protocol(format!("composition {c} needs translated images")))
        };
        match c {
            Composition::Baseline => set.items.extend(self.minority.items.iter().cloned()),
            Composition::Repeat => {
                let target = self.majority.len().max(self.minority.len());
                set.items.extend(repeat_baseline(&self.minority, target)?.items);
            }
            Composition::Sitta => {
                set.items.extend(self.minority.items.iter().cloned());
                set.items.extend(sitta()?.items.iter().cloned());
            }
            Composition::SittaPlusRepeat => {
                let s = sitta()?;
                let target = s.len().max(self.minority.len());
                set.items.extend(s.items.iter().cloned());
                set.items.extend(repeat_baseline(&self.minority, target)?.items);
            }
        }
        Ok(set)
    }

    fn check_disjoint(&self, train: &ImageSet) -> Result<()> {
        let test: HashSet<&PathBuf> = self.test.items.iter().map(|(p, _)| p).collect();
        if let Some((p, _)) = train.items.iter().find(|(p, _)| test.contains(p)) {
            return Err(Error::Protocol(format!(
                "test image {} appears in a training set",
                p.display()
            )));
        }
        Ok(())
    }
}

/// Synthetic long-tailed two-class data: many majority images, a handful of
/// minority images and a balanced held-out test set. All classes share the
/// silhouette distribution and differ only in fill texture.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTailSetup {
    pub majority: usize,
    pub minority: usize,
    pub test_per_class: usize,
    pub side: usize,
    pub shape: ShapeKind,
    pub majority_texture: TextureKind,
    pub minority_texture: TextureKind,
    pub majority_label: String,
    pub minority_label: String,
    pub seed: u64,
}

impl Default for LongTailSetup {
    fn default() -> Self {
        LongTailSetup {
            majority: 64,
            minority: 1,
            test_per_class: 50,
            side: 64,
            shape: ShapeKind::Leaf,
            majority_texture: TextureKind::Stripes,
            minority_texture: TextureKind::Dots,
            majority_label: "healthy".into(),
            minority_label: "sick".into(),
            seed: 0,
        }
    }
}

impl LongTailSetup {
    fn write(&self, dir: &Path, group: &str, label: &str, texture: TextureKind, n: usize, stream: u64) -> Result<ImageSet> {
        let sub = dir.join(group);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let base = mix_seed(self.seed, stream);
        let mut set = ImageSet::new(label);
        for i in 0..n {
            let p = sub.join(format!("{group}_{i:03}.png"));
            save_image(&render_image(texture, self.shape, self.side, mix_seed(base, i as u64)), &p)?;
            set.push(p, label);
        }
        Ok(set)
    }

    /// Writes the images under `dir` and returns them without translated data.
    pub fn materialize(&self, dir: &Path) -> Result<BenchData> {
        if self.majority == 0 || self.minority == 0 || self.test_per_class == 0 {
            return Err(Error::Argument("long-tail set sizes must be positive".into()));
        }
        let (ml, nl) = (&self.majority_label, &self.minority_label);
        let majority = self.write(dir, "train_majority", ml, self.majority_texture, self.majority, 1)?;
        let minority = self.write(dir, "train_minority", nl, self.minority_texture, self.minority, 2)?;
        let mut test = self.write(dir, "test_majority", ml, self.majority_texture, self.test_per_class, 3)?;
        test.items.extend(
            self.write(dir, "test_minority", nl, self.minority_texture, self.test_per_class, 4)?
                .items,
        );
        test.domain_tag = "test".into();
        Ok(BenchData {
            majority,
            minority,
            sitta: None,
            test,
        })
    }
}

/// Transfers the minority texture onto every majority image (one model per
/// minority image) and labels the results with the minority label.
pub fn translate_minority(data: &BenchData, train_cfg: &TrainConfig, out_dir: &Path) -> Result<ImageSet> {
    let job = AugJob {
        content_set: data.majority.clone(),
        texture_set: data.minority.clone(),
        mode: Mode::SingleToMulti,
        label_policy: LabelPolicy::TextureLabel,
        train_cfg: train_cfg.clone(),
        output_dir: out_dir.to_path_buf(),
    };
    Ok(augment_single_to_multi(&job)?.set)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub composition: String,
    /// Seed number, or "mean".
    pub seed: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn mean(&self, c: Composition) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.composition == c.name() && r.seed == "mean")
            .map(|r| r.accuracy)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Protocol(format!("csv: {e}")))?;
        }
        w.into_inner().map_err(|e| Error::Protocol(format!("csv: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_csv()?)
    }
}

/// Trains one classifier per (composition, seed) and scores it on the test
/// set. Seeds run in parallel; each run is single-threaded.
pub fn run_bench(protocol: &BenchProtocol, data: &BenchData) -> Result<BenchTable> {
    if protocol.seeds.is_empty() || protocol.compositions.is_empty() {
        return Err(Error::Protocol("protocol needs at least one seed and composition".into()));
    }
    let side = protocol.classifier.input_side;
    let mut table = BenchTable::default();
    for &c in &protocol.compositions {
        if c.needs_sitta() && data.sitta.is_none() {
            return Err(Error::Protocol(format!("composition {c} needs translated images")));
        }
        let train = data.compose(c)?;
        data.check_disjoint(&train)?;
        let classes = train.labels();
        let train_t = load_labeled(&train, &classes, side)?;
        let test_t = load_labeled(&data.test, &classes, side)?;
        let accs = protocol
            .seeds
            .par_iter()
            .map(|&seed| {
                let (clf, _) = train_on_tensors(&protocol.classifier, classes.clone(), &train_t, seed)?;
                accuracy(&clf, &test_t)
            })
            .collect::<Result<Vec<f64>>>()?;
        for (&seed, &a) in protocol.seeds.iter().zip(&accs) {
            log::info!("{c} seed {seed}: accuracy {a:.4}");
            table.rows.push(BenchRow {
                composition: c.name().into(),
                seed: seed.to_string(),
                accuracy: a,
            });
        }
        table.rows.push(BenchRow {
            composition: c.name().into(),
            seed: "mean".into(),
            accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{render_image, save_image, ShapeKind, TextureKind};
    use std::time::Instant;

    fn small_spec() -> ClassifierSpec {
        ClassifierSpec {
            widths: [8, 16, 16],
            input_side: 32,
            epochs: 4,
            batch_size: 8,
            ..ClassifierSpec::default()
        }
    }

    fn write(dir: &Path, name: &str, texture: TextureKind, n: usize, seed0: u64, side: usize) -> ImageSet {
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub).unwrap();
        let mut s = ImageSet::new(name);
        for i in 0..n {
            let p = sub.join(format!("{name}{i:03}.ppm"));
            save_image(&render_image(texture, ShapeKind::Leaf, side, seed0 + i as u64), &p).unwrap();
            s.push(p, name);
        }
        s
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0.01, 0, 11), 0.01);
        assert!(cosine_lr(0.01, 10, 11).abs() < 1e-18);
        assert!((cosine_lr(0.01, 5, 11) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn compositions_have_expected_sizes() {
        let mut maj = ImageSet::new("healthy");
        for i in 0..6 {
            maj.push(format!("h{i}.png"), "healthy");
        }
        let mut min = ImageSet::new("sick");
        min.push("s.png", "sick");
        let mut sitta = ImageSet::new("sick");
        for i in 0..6 {
            sitta.push(format!("t{i}.png"), "sick");
        }
        let data = BenchData {
            majority: maj,
            minority: min,
            sitta: Some(sitta),
            test: ImageSet::new("test"),
        };
        let count = |c| {
            let s = data.compose(c).unwrap();
            (s.with_label("healthy").len(), s.with_label("sick").len())
        };
        assert_eq!(count(Composition::Baseline), (6, 1));
        assert_eq!(count(Composition::Repeat), (6, 6));
        assert_eq!(count(Composition::Sitta), (6, 7));
        assert_eq!(count(Composition::SittaPlusRepeat), (6, 12));
        let no_sitta = BenchData { sitta: None, ..data };
        assert!(matches!(no_sitta.compose(Composition::Sitta), Err(Error::Protocol(_))));
    }

    #[test]
    fn training_is_seeded_and_loss_decreases() {
        let d = tempfile::tempdir().unwrap();
        let mut train = write(d.path(), "stripes", TextureKind::Stripes, 12, 0, 32);
        train.items.extend(write(d.path(), "dots", TextureKind::Dots, 12, 100, 32).items);
        let spec = ClassifierSpec { epochs: 6, ..small_spec() };
        let (a, curve) = train_classifier(&spec, &train, 5).unwrap();
        let (b, _) = train_classifier(&spec, &train, 5).unwrap();
        for ((_, p), (_, q)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(p.value, q.value);
        }
        assert!(curve.last().unwrap() < &curve[0], "{curve:?}");
    }

    #[test]
    fn single_class_train_and_test_is_perfect() {
        let d = tempfile::tempdir().unwrap();
        let set = write(d.path(), "only", TextureKind::Noise, 4, 0, 32);
        let spec = ClassifierSpec { epochs: 1, ..small_spec() };
        let (clf, _) = train_classifier(&spec, &set, 1).unwrap();
        let data = load_labeled(&set, &clf.classes, 32).unwrap();
        assert_eq!(accuracy(&clf, &data).unwrap(), 1.0);
    }

    #[test]
    fn untrained_classifier_is_near_chance() {
        let d = tempfile::tempdir().unwrap();
        let mut test = write(d.path(), "stripes", TextureKind::Stripes, 10, 0, 32);
        test.items.extend(write(d.path(), "dots", TextureKind::Dots, 10, 50, 32).items);
        let classes = test.labels();
        let data = load_labeled(&test, &classes, 32).unwrap();
        let accs: Vec<f64> = (0..5)
            .map(|s| {
                let clf = Classifier::new(small_spec(), classes.clone(), s).unwrap();
                accuracy(&clf, &data).unwrap()
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.15, "{accs:?}");
    }

    #[test]
    fn missing_class_is_a_protocol_error() {
        let d = tempfile::tempdir().unwrap();
        let train = write(d.path(), "stripes", TextureKind::Stripes, 3, 0, 32);
        let test = write(d.path(), "dots", TextureKind::Dots, 3, 9, 32);
        let data = BenchData {
            majority: train.clone(),
            minority: ImageSet::new("dots"),
            sitta: None,
            test,
        };
        let protocol = BenchProtocol {
            compositions: vec![Composition::Baseline],
            classifier: ClassifierSpec { epochs: 1, ..small_spec() },
            seeds: vec![0],
        };
        assert!(matches!(run_bench(&protocol, &data), Err(Error::Protocol(_))));
    }

    #[test]
    fn test_leak_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        let maj = write(d.path(), "stripes", TextureKind::Stripes, 3, 0, 32);
        let min = write(d.path(), "dots", TextureKind::Dots, 1, 9, 32);
        let mut test = maj.clone();
        test.items.extend(min.items.iter().cloned());
        let data = BenchData {
            majority: maj,
            minority: min,
            sitta: None,
            test,
        };
        let protocol = BenchProtocol {
            compositions: vec![Composition::Baseline],
            classifier: ClassifierSpec { epochs: 1, ..small_spec() },
            seeds: vec![0],
        };
        let err = run_bench(&protocol, &data).unwrap_err();
        assert!(err.to_string().contains("appears in a training set"), "{err}");
    }

    #[test]
    fn bench_table_has_rows_per_seed_and_mean() {
        let d = tempfile::tempdir().unwrap();
        let maj = write(d.path(), "stripes", TextureKind::Stripes, 4, 0, 32);
        let min = write(d.path(), "dots", TextureKind::Dots, 1, 9, 32);
        let mut test = write(d.path(), "t_s", TextureKind::Stripes, 2, 40, 32);
        test.items.extend(write(d.path(), "t_d", TextureKind::Dots, 2, 60, 32).items);
        for (_, l) in &mut test.items {
            *l = if l == "t_s" { "stripes".into() } else { "dots".into() };
        }
        let data = BenchData {
            majority: maj,
            minority: min,
            sitta: None,
            test,
        };
        let protocol = BenchProtocol {
            compositions: vec![Composition::Baseline, Composition::Repeat],
            classifier: ClassifierSpec { epochs: 1, ..small_spec() },
            seeds: vec![0, 1],
        };
        let t = run_bench(&protocol, &data).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.mean(Composition::Repeat).is_some());
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert!(csv.starts_with("composition,seed,accuracy\n"));
    }

    #[test]
    fn one_epoch_smoke_at_64px_200_images_is_fast() {
        let d = tempfile::tempdir().unwrap();
        let mut train = write(d.path(), "stripes", TextureKind::Stripes, 100, 0, 64);
        train.items.extend(write(d.path(), "dots", TextureKind::Dots, 100, 500, 64).items);
        let spec = ClassifierSpec { epochs: 1, ..ClassifierSpec::default() };
        let t0 = Instant::now();
        train_classifier(&spec, &train, 0).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        assert!(secs < 60.0, "{secs} s");
    }

    #[test]
    fn long_tail_setup_is_disjoint_and_sized() {
        let d = tempfile::tempdir().unwrap();
        let setup = LongTailSetup {
            majority: 5,
            test_per_class: 3,
            side: 32,
            ..LongTailSetup::default()
        };
        let data = setup.materialize(d.path()).unwrap();
        assert_eq!((data.majority.len(), data.minority.len(), data.test.len()), (5, 1, 6));
        assert_eq!(data.test.labels(), ["healthy", "sick"]);
        for c in [Composition::Baseline, Composition::Repeat] {
            data.check_disjoint(&data.compose(c).unwrap()).unwrap();
        }
        let images: Vec<Vec<u8>> = data
            .majority
            .items
            .iter()
            .chain(&data.test.items)
            .map(|(p, _)| std::fs::read(p).unwrap())
            .collect();
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                assert_ne!(images[i], images[j]);
            }
        }
    }

    #[test]
    fn composition_names_round_trip() {
        for c in Composition::ALL {
            assert_eq!(c.name().parse::<Composition>().unwrap(), c);
        }
        assert!("mixup".parse::<Composition>().is_err());
    }
}
