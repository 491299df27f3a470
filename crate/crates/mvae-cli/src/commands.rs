//! Pipeline commands: hierarchy building, feature extraction, training,
//! generation, interpolation, embedding, and reconstruction evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use mvae_core::features::{
    decode_features, encode_features, encode_with_scale, load_features, save_features,
    FeatureSet, ScaleParams,
};
use mvae_core::hierarchy::{build_hierarchy, load_hierarchy, save_hierarchy, Hierarchy};
use mvae_core::mesh::{parse_obj, validate_same_connectivity, write_obj, Mesh};
use mvae_core::reconstruct::reconstruct_positions;
use mvae_core::vae::{
    build_model, decode, encode, load_params, save_params, train, ModelContext, VaeParams,
};
use nalgebra::Point3;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::RunConfig;

/// Command failure with the process exit code it maps to: 2 for input or
/// configuration problems, 3 for numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => 2,
            CommandError::Numeric(_) => 3,
        }
    }
}

pub type CmdResult<T> = Result<T, CommandError>;

fn input_err(e: impl std::fmt::Display) -> CommandError {
    CommandError::Input(e.to_string())
}

impl From<crate::config::ConfigError> for CommandError {
    fn from(e: crate::config::ConfigError) -> Self {
        CommandError::Input(e.to_string())
    }
}

impl From<mvae_core::mesh::MeshError> for CommandError {
    fn from(e: mvae_core::mesh::MeshError) -> Self {
        CommandError::Input(e.to_string())
    }
}

impl From<mvae_core::hierarchy::HierarchyError> for CommandError {
    fn from(e: mvae_core::hierarchy::HierarchyError) -> Self {
        use mvae_core::hierarchy::HierarchyError;
        match &e {
            HierarchyError::Simplify(mvae_core::simplify::SimplifyError::Stalled { .. }) => {
                CommandError::Numeric(e.to_string())
            }
            _ => CommandError::Input(e.to_string()),
        }
    }
}

impl From<mvae_core::features::FeatureError> for CommandError {
    fn from(e: mvae_core::features::FeatureError) -> Self {
        CommandError::Input(e.to_string())
    }
}

impl From<mvae_core::vae::VaeError> for CommandError {
    fn from(e: mvae_core::vae::VaeError) -> Self {
        match &e {
            mvae_core::vae::VaeError::NonFinite(_) => CommandError::Numeric(e.to_string()),
            _ => CommandError::Input(e.to_string()),
        }
    }
}

impl From<mvae_core::reconstruct::ReconstructError> for CommandError {
    fn from(e: mvae_core::reconstruct::ReconstructError) -> Self {
        use mvae_core::reconstruct::ReconstructError;
        match &e {
            ReconstructError::NoConvergence { .. } | ReconstructError::SingularSystem => {
                CommandError::Numeric(e.to_string())
            }
            _ => CommandError::Input(e.to_string()),
        }
    }
}

fn read_mesh(path: &Path) -> CmdResult<Mesh> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    parse_obj(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn write_mesh(path: &Path, mesh: &Mesh) -> CmdResult<()> {
    fs::write(path, write_obj(mesh))
        .map_err(|e| input_err(format!("cannot write {}: {e}", path.display())))
}

/// OBJ files in the dataset directory, sorted by filename, excluding the
/// reference file itself.
fn dataset_files(cfg: &RunConfig) -> CmdResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(&cfg.dataset_dir)
        .map_err(|e| input_err(format!("cannot list {}: {e}", cfg.dataset_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "obj"))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy() != cfg.reference))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(input_err(format!(
            "no dataset .obj files in {}",
            cfg.dataset_dir.display()
        )));
    }
    Ok(files)
}

/// Per-shape class labels from the `labels` TSV (filename <TAB> class).
fn load_labels(cfg: &RunConfig, files: &[PathBuf]) -> CmdResult<Vec<usize>> {
    let path = cfg.labels.as_ref().ok_or_else(|| {
        input_err("conditional model requires [data] labels = <tsv file>".to_string())
    })?;
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let mut by_name = std::collections::BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, label)) = line.split_once('\t') else {
            return Err(input_err(format!(
                "{}:{}: expected `filename<TAB>label`",
                path.display(),
                lineno + 1
            )));
        };
        let label: usize = label.trim().parse().map_err(|_| {
            input_err(format!(
                "{}:{}: label {:?} is not an integer",
                path.display(),
                lineno + 1,
                label
            ))
        })?;
        by_name.insert(name.trim().to_string(), label);
    }
    files
        .iter()
        .map(|f| {
            let name = f.file_name().unwrap().to_string_lossy().to_string();
            by_name
                .get(&name)
                .copied()
                .ok_or_else(|| input_err(format!("no label for {name} in {}", path.display())))
        })
        .collect()
}

fn ensure_out_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| input_err(format!("cannot create {}: {e}", dir.display())))
}

fn effective_lambda(cfg: &RunConfig, reference: &Mesh) -> f64 {
    if cfg.normalize_lambda {
        cfg.lambda * reference.bbox_diagonal()
    } else {
        cfg.lambda
    }
}

/// Builds the hierarchy for the reference mesh and persists per-level OBJ
/// and map files. Prints the level sizes.
pub fn cmd_hierarchy(cfg: &RunConfig) -> CmdResult<()> {
    let reference = read_mesh(&cfg.reference_path())?;
    let lambda = effective_lambda(cfg, &reference);
    let hierarchy = build_hierarchy(&reference, cfg.levels, lambda)?;
    ensure_out_dir(&cfg.out_dir)?;
    save_hierarchy(&cfg.hierarchy_dir(), &hierarchy)?;
    let sizes: Vec<String> = hierarchy
        .level_sizes()
        .iter()
        .map(|v| v.to_string())
        .collect();
    println!("{}", sizes.join(" → "));
    Ok(())
}

/// Validates connectivity of every dataset shape against the reference,
/// extracts scaled deformation features, and writes the feature file.
pub fn cmd_features(cfg: &RunConfig) -> CmdResult<()> {
    let reference = read_mesh(&cfg.reference_path())?;
    let files = dataset_files(cfg)?;
    let mut shapes = Vec::with_capacity(files.len());
    let mut offenders = Vec::new();
    for file in &files {
        let mesh = read_mesh(file)?;
        let check = validate_same_connectivity(&reference, &mesh);
        if let mvae_core::mesh::ConnectivityCheck::Mismatch(msg) = check {
            offenders.push(format!("{}: {msg}", file.display()));
        } else {
            shapes.push(mesh.positions);
        }
    }
    if !offenders.is_empty() {
        return Err(input_err(format!(
            "connectivity mismatch against {}:\n  {}",
            cfg.reference,
            offenders.join("\n  ")
        )));
    }
    let adj = mvae_core::mesh::build_adjacency(&reference)?;
    let set = encode_features(&reference, &shapes, &adj, &cfg.reference)?;
    ensure_out_dir(&cfg.out_dir)?;
    save_features(&cfg.features_path(), &set)?;
    for (j, &(a, b)) in set.scale.coeffs.iter().enumerate() {
        // Invert the fitted map to report the raw training range.
        let lo = (-0.95 - b) / a;
        let hi = (0.95 - b) / a;
        println!("column {j}: raw range [{lo:.6}, {hi:.6}]");
    }
    println!(
        "wrote {} shapes x {} vertices to {}",
        set.shapes.len(),
        set.vertex_count,
        cfg.features_path().display()
    );
    Ok(())
}

fn load_artifacts(cfg: &RunConfig) -> CmdResult<(Hierarchy, FeatureSet)> {
    let hierarchy = load_hierarchy(&cfg.hierarchy_dir()).map_err(|e| {
        input_err(format!(
            "cannot load hierarchy from {} (run `hierarchy` first): {e}",
            cfg.hierarchy_dir().display()
        ))
    })?;
    let features = load_features(&cfg.features_path()).map_err(|e| {
        input_err(format!(
            "cannot load features from {} (run `features` first): {e}",
            cfg.features_path().display()
        ))
    })?;
    Ok((hierarchy, features))
}

/// Trains the model and writes the checkpoint plus a per-epoch loss log.
pub fn cmd_train(cfg: &RunConfig) -> CmdResult<()> {
    let (hierarchy, features) = load_artifacts(cfg)?;
    let labels = if cfg.arch.condition > 0 {
        Some(load_labels(cfg, &dataset_files(cfg)?)?)
    } else {
        None
    };
    let ctx = ModelContext::from_hierarchy(&hierarchy, &cfg.arch)?;
    let mut params = build_model(&ctx, &cfg.arch, cfg.train.seed)?;
    let log = train(
        &ctx,
        &mut params,
        &features.shapes,
        labels.as_deref(),
        &cfg.train,
    )?;
    save_params(&cfg.checkpoint_path(), &params)?;
    let mut lines = String::new();
    for e in &log {
        lines.push_str(&format!(
            "{}\t{:.17e}\t{:.17e}\t{:.17e}\n",
            e.epoch, e.recon, e.kl, e.total
        ));
    }
    fs::write(cfg.loss_log_path(), lines)
        .map_err(|e| input_err(format!("cannot write loss log: {e}")))?;
    if let Some(last) = log.last() {
        println!(
            "epoch {}: recon {:.6e} kl {:.6e} total {:.6e}",
            last.epoch, last.recon, last.kl, last.total
        );
    }
    println!("checkpoint: {}", cfg.checkpoint_path().display());
    Ok(())
}

/// Shared state for the decoding commands.
pub struct DecoderSession {
    pub reference: Mesh,
    pub adjacency: mvae_core::mesh::Adjacency,
    pub ctx: ModelContext,
    pub params: VaeParams,
    pub scale: ScaleParams,
    pub features: FeatureSet,
}

pub fn open_session(cfg: &RunConfig) -> CmdResult<DecoderSession> {
    let (hierarchy, features) = load_artifacts(cfg)?;
    let ctx = ModelContext::from_hierarchy(&hierarchy, &cfg.arch)?;
    let params = load_params(&cfg.checkpoint_path(), Some(ctx.hierarchy_hash))?;
    let reference = hierarchy.levels[0].mesh.clone();
    let adjacency = hierarchy.levels[0].adjacency.clone();
    Ok(DecoderSession {
        reference,
        adjacency,
        ctx,
        params,
        scale: features.scale,
        features,
    })
}

/// Latent vector -> decoded features -> deformation gradients -> positions.
/// The translation gauge anchors vertex 0 at its reference position.
pub fn decode_to_mesh(
    session: &DecoderSession,
    z: &Array1<f64>,
    label: Option<usize>,
) -> CmdResult<Mesh> {
    let xhat = decode(&session.ctx, &session.params, z, label)?;
    let gradients = decode_features(xhat.view(), &session.scale);
    let anchor = (0usize, session.reference.positions[0]);
    let positions =
        reconstruct_positions(&session.reference, &gradients, &session.adjacency, anchor)?;
    Ok(Mesh {
        positions,
        faces: session.reference.faces.clone(),
    })
}

/// RMS vertex distance of a reconstruction against ground truth, before and
/// after translation (centroid) alignment.
pub fn rms_pair(recon: &Mesh, gt: &Mesh) -> (f64, f64) {
    let v = gt.positions.len() as f64;
    let rms_raw = (recon
        .positions
        .iter()
        .zip(&gt.positions)
        .map(|(p, q)| (p - q).norm_squared())
        .sum::<f64>()
        / v)
        .sqrt();
    let centroid = |m: &Mesh| -> nalgebra::Vector3<f64> {
        m.positions.iter().map(|p| p.coords).sum::<nalgebra::Vector3<f64>>()
            / m.positions.len() as f64
    };
    let offset = centroid(gt) - centroid(recon);
    let rms_aligned = (recon
        .positions
        .iter()
        .zip(&gt.positions)
        .map(|(p, q)| ((p + offset) - q).norm_squared())
        .sum::<f64>()
        / v)
        .sqrt();
    (rms_raw, rms_aligned)
}

fn mean_vertex_distance(a: &Mesh, b: &Mesh) -> f64 {
    let n = a.positions.len() as f64;
    a.positions
        .iter()
        .zip(&b.positions)
        .map(|(p, q)| (p - q).norm())
        .sum::<f64>()
        / n
}

/// Samples latent vectors from the standard normal prior, decodes and
/// reconstructs them, and reports each sample's nearest training shape by
/// mean per-vertex distance.
pub fn cmd_generate(
    cfg: &RunConfig,
    count: usize,
    seed: u64,
    label: Option<usize>,
    use_mean: bool,
) -> CmdResult<()> {
    let session = open_session(cfg)?;
    let gen_dir = cfg.out_dir.join("gen");
    ensure_out_dir(&gen_dir)?;
    let dataset: Vec<Mesh> = dataset_files(cfg)?
        .iter()
        .map(|f| read_mesh(f))
        .collect::<CmdResult<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = session.params.arch.latent;
    let mut report = String::from("# generated\tnearest_shape\tmean_distance\n");
    for i in 0..count {
        let z = if use_mean {
            Array1::zeros(latent)
        } else {
            Array1::from_iter((0..latent).map(|_| StandardNormal.sample(&mut rng)))
        };
        let mesh = decode_to_mesh(&session, &z, label)?;
        let path = gen_dir.join(format!("gen_{i:04}.obj"));
        write_mesh(&path, &mesh)?;
        let (best_idx, best_dist) = dataset
            .iter()
            .enumerate()
            .map(|(k, m)| (k, mean_vertex_distance(&mesh, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("dataset nonempty");
        report.push_str(&format!("{i}\t{best_idx}\t{best_dist:.17e}\n"));
        println!(
            "gen_{i:04}.obj  nearest training shape {best_idx} at mean distance {best_dist:.6}"
        );
    }
    fs::write(gen_dir.join("nearest_neighbors.tsv"), report)
        .map_err(|e| input_err(format!("cannot write nearest-neighbor report: {e}")))?;
    Ok(())
}

/// Linear interpolation between the posterior means of two dataset shapes.
pub fn cmd_interpolate(
    cfg: &RunConfig,
    from: usize,
    to: usize,
    steps: usize,
) -> CmdResult<()> {
    if steps < 2 {
        return Err(input_err(format!("steps must be at least 2, got {steps}")));
    }
    let session = open_session(cfg)?;
    let shapes = &session.features.shapes;
    for idx in [from, to] {
        if idx >= shapes.len() {
            return Err(input_err(format!(
                "shape index {idx} out of range (dataset has {})",
                shapes.len()
            )));
        }
    }
    let labels = if cfg.arch.condition > 0 {
        Some(load_labels(cfg, &dataset_files(cfg)?)?)
    } else {
        None
    };
    let label_of = |idx: usize| labels.as_ref().map(|l| l[idx]);
    let mu_a = encode(
        &session.ctx,
        &session.params,
        shapes[from].view(),
        label_of(from),
    )?
    .mean;
    let mu_b = encode(
        &session.ctx,
        &session.params,
        shapes[to].view(),
        label_of(to),
    )?
    .mean;
    let interp_dir = cfg.out_dir.join("interp");
    ensure_out_dir(&interp_dir)?;
    // Frames of a conditional model carry the source shape's label.
    let frame_label = label_of(from);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        // Endpoints reproduce the means bit-exactly; the difference form
        // keeps degenerate interpolation (A = B) exact at interior steps.
        let z = if t == 0.0 {
            mu_a.clone()
        } else if t == 1.0 {
            mu_b.clone()
        } else {
            &mu_a + &(&mu_b - &mu_a).mapv(|v| t * v)
        };
        let mesh = decode_to_mesh(&session, &z, frame_label)?;
        write_mesh(&interp_dir.join(format!("frame_{k:03}.obj")), &mesh)?;
    }
    println!(
        "wrote {steps} frames from shape {from} to shape {to} in {}",
        interp_dir.display()
    );
    Ok(())
}

/// Result of the 2D latent embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub dims: (usize, usize),
    pub variances: (f64, f64),
    pub coords: Vec<(f64, f64)>,
}

/// Chooses the two latent dimensions with the largest variance of the
/// posterior means across the dataset (ties break toward lower indices) and
/// uses the raw mean values in those dimensions as 2D coordinates.
pub fn embed_means(mus: &[Array1<f64>]) -> CmdResult<EmbeddingResult> {
    if mus.len() < 2 {
        return Err(input_err(format!(
            "embedding needs at least 2 shapes, got {}",
            mus.len()
        )));
    }
    let latent = mus[0].len();
    let n = mus.len() as f64;
    let mut variances = vec![0.0f64; latent];
    for d in 0..latent {
        let mean: f64 = mus.iter().map(|mu| mu[d]).sum::<f64>() / n;
        variances[d] = mus.iter().map(|mu| (mu[d] - mean).powi(2)).sum::<f64>() / n;
    }
    let mut order: Vec<usize> = (0..latent).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    // Horizontal axis carries the larger variance.
    let (dx, dy) = (order[0], order[1]);
    Ok(EmbeddingResult {
        dims: (dx, dy),
        variances: (variances[dx], variances[dy]),
        coords: mus.iter().map(|mu| (mu[dx], mu[dy])).collect(),
    })
}

/// Embeds every dataset shape at its posterior mean in the two
/// largest-variance latent dimensions; writes a TSV plot file.
pub fn cmd_embed(cfg: &RunConfig) -> CmdResult<EmbeddingResult> {
    let session = open_session(cfg)?;
    let labels = if cfg.arch.condition > 0 {
        Some(load_labels(cfg, &dataset_files(cfg)?)?)
    } else {
        None
    };
    let mut mus = Vec::new();
    for (i, x) in session.features.shapes.iter().enumerate() {
        let label = labels.as_ref().map(|l| l[i]);
        mus.push(encode(&session.ctx, &session.params, x.view(), label)?.mean);
    }
    let result = embed_means(&mus)?;
    let mut tsv = format!(
        "# dims\t{}\t{}\n# variance\t{:.17e}\t{:.17e}\n",
        result.dims.0, result.dims.1, result.variances.0, result.variances.1
    );
    for (i, (x, y)) in result.coords.iter().enumerate() {
        tsv.push_str(&format!("{i}\t{x:.17e}\t{y:.17e}\n"));
    }
    ensure_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("embedding.tsv");
    fs::write(&path, tsv).map_err(|e| input_err(format!("cannot write embedding: {e}")))?;
    println!(
        "embedded {} shapes on latent dims ({}, {}); variances ({:.4e}, {:.4e}) -> {}",
        result.coords.len(),
        result.dims.0,
        result.dims.1,
        result.variances.0,
        result.variances.1,
        path.display()
    );
    Ok(result)
}

/// Per-shape reconstruction RMS against held-out ground truth, before and
/// after translation alignment.
pub fn cmd_eval(cfg: &RunConfig, heldout_dir: &Path) -> CmdResult<()> {
    let session = open_session(cfg)?;
    let mut files: Vec<PathBuf> = fs::read_dir(heldout_dir)
        .map_err(|e| input_err(format!("cannot list {}: {e}", heldout_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "obj"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(input_err(format!(
            "no held-out .obj files in {}",
            heldout_dir.display()
        )));
    }
    let mut rows = String::from("# shape\trms\trms_aligned\n");
    let mut sum_raw = 0.0;
    let mut sum_aligned = 0.0;
    for file in &files {
        let gt = read_mesh(file)?;
        if let mvae_core::mesh::ConnectivityCheck::Mismatch(msg) =
            validate_same_connectivity(&session.reference, &gt)
        {
            return Err(input_err(format!("{}: {msg}", file.display())));
        }
        let scaled = encode_with_scale(
            &session.reference,
            &[gt.positions.clone()],
            &session.adjacency,
            &session.scale,
        )?
        .remove(0);
        // Conditional eval uses label 0; held-out labels are not modeled.
        let label = (session.params.arch.condition > 0).then_some(0);
        let code = encode(&session.ctx, &session.params, scaled.view(), label)?;
        let recon = decode_to_mesh(&session, &code.mean, label)?;
        let (rms_raw, rms_aligned) = rms_pair(&recon, &gt);
        let name = file.file_name().unwrap().to_string_lossy();
        rows.push_str(&format!("{name}\t{rms_raw:.17e}\t{rms_aligned:.17e}\n"));
        println!("{name}: rms {rms_raw:.6e} (aligned {rms_aligned:.6e})");
        sum_raw += rms_raw;
        sum_aligned += rms_aligned;
    }
    let n = files.len() as f64;
    rows.push_str(&format!(
        "mean\t{:.17e}\t{:.17e}\n",
        sum_raw / n,
        sum_aligned / n
    ));
    println!(
        "mean rms {:.6e} (aligned {:.6e})",
        sum_raw / n,
        sum_aligned / n
    );
    ensure_out_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("eval.tsv"), rows)
        .map_err(|e| input_err(format!("cannot write eval report: {e}")))?;
    Ok(())
}

/// Procedural toy datasets with fixed generation parameters.
pub fn cmd_synth(kind: &str, out_dir: &Path, shapes: usize) -> CmdResult<()> {
    ensure_out_dir(out_dir)?;
    let write_family = |base: &Mesh,
                        family: &[Vec<Point3<f64>>],
                        out_dir: &Path|
     -> CmdResult<()> {
        write_mesh(&out_dir.join("reference.obj"), base)?;
        for (i, positions) in family.iter().enumerate() {
            let mesh = Mesh {
                positions: positions.clone(),
                faces: base.faces.clone(),
            };
            write_mesh(&out_dir.join(format!("shape_{i:03}.obj")), &mesh)?;
        }
        Ok(())
    };
    match kind {
        "bent-cylinder" => {
            let n = if shapes == 0 { 20 } else { shapes };
            let (base, family) = mvae_core::synth::bent_cylinder_family(63, 8, n, 0.6);
            write_family(&base, &family, out_dir)?;
            println!("wrote {} bent-cylinder shapes (V = {})", n, base.vertex_count());
        }
        "bar-cycle" => {
            let n = if shapes == 0 { 36 } else { shapes };
            let (base, family) = mvae_core::synth::bar_cycle_family(24, 8, n, 0.5);
            write_family(&base, &family, out_dir)?;
            println!("wrote {} bar-cycle frames (V = {})", n, base.vertex_count());
        }
        "two-class" => {
            let per_class = if shapes == 0 { 10 } else { shapes / 2 };
            let (base, family, labels) =
                mvae_core::synth::two_class_family(24, 8, per_class);
            write_family(&base, &family, out_dir)?;
            let mut tsv = String::new();
            for (i, label) in labels.iter().enumerate() {
                tsv.push_str(&format!("shape_{i:03}.obj\t{label}\n"));
            }
            fs::write(out_dir.join("labels.tsv"), tsv)
                .map_err(|e| input_err(format!("cannot write labels: {e}")))?;
            println!(
                "wrote {} two-class shapes (V = {}) with labels.tsv",
                family.len(),
                base.vertex_count()
            );
        }
        "sphere" => {
            let mesh = mvae_core::synth::icosphere(3);
            write_mesh(&out_dir.join("reference.obj"), &mesh)?;
            println!("wrote 642-vertex icosphere");
        }
        other => {
            return Err(input_err(format!(
                "unknown synth kind {other:?} (expected bent-cylinder, bar-cycle, two-class, or sphere)"
            )));
        }
    }
    Ok(())
}

/// Builds scaled features for one extra shape under the training scaling
/// (used by tests comparing against direct encode output).
pub fn scaled_features_of(
    session: &DecoderSession,
    positions: &[Point3<f64>],
) -> CmdResult<Array2<f64>> {
    Ok(encode_with_scale(
        &session.reference,
        &[positions.to_vec()],
        &session.adjacency,
        &session.scale,
    )?
    .remove(0))
}
