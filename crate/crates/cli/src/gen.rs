use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use repsim::reprdata::write_rsm;
use repsim::synthgen::{
    apply_relation, derive_seed, gen_layer_stack, gen_random, gen_shared_subspace_pair, LayerStackSpec,
    Relation, SynthSpec, DEFAULT_NOISE_LEVEL, DEFAULT_SIGNAL_RANK,
};
use serde_json::{json, Value};

use crate::layers::MANIFEST;
use crate::output::to_json;
use crate::CliError;

pub const DEFAULT_SPECTRUM_DECAY: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_LAYERS: usize = 8;
pub const DEFAULT_NETWORKS: usize = 1;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GenKind {
    /// One centered Gaussian matrix
    Random,
    /// A matrix and a second one derived from it by --relation
    Pair,
    /// Layer stacks of one or more synthetic networks
    Stack,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
pub enum RelationKind {
    Independent,
    OrthogonalTransform,
    InvertibleTransform,
    IsotropicScale,
    SharedSubspace,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Number of examples
    #[arg(long)]
    pub n: usize,
    /// Number of features per matrix
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_enum)]
    pub relation: Option<RelationKind>,
    /// Scale for isotropic-scale [default: 2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Components shared by a shared-subspace pair
    #[arg(long, value_delimiter = ',')]
    pub shared_indices: Option<Vec<usize>>,
    /// Eigenvalue decay of a shared-subspace pair [default: 0.5]
    #[arg(long)]
    pub spectrum_decay: Option<f64>,
    /// Noise level [default: 0 for pairs, 0.1 for stacks]
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Layers per network [default: 8]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Networks in a stack run [default: 1]
    #[arg(long)]
    pub networks: Option<usize>,
    /// Signal rank per layer [default: 4]
    #[arg(long)]
    pub signal_rank: Option<usize>,
}

fn reject(flag: &str, present: bool, why: &str) -> Result<(), CliError> {
    if present {
        Err(CliError::Usage(format!("{flag} is not used {why}")))
    } else {
        Ok(())
    }
}

fn write_layers(dir: &Path, names: &[String], mats: &[repsim::ActivationMatrix]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, m) in names.iter().zip(mats) {
        write_rsm(&dir.join(name), m)?;
    }
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Value) -> Result<(), CliError> {
    let path = dir.join(MANIFEST);
    fs::write(&path, to_json(manifest)).map_err(|e| CliError::io(&path, e))
}

/// Writes the requested matrices and returns the manifest that describes them.
pub fn run(args: &GenArgs, seed: u64) -> Result<Value, CliError> {
    match args.kind {
        GenKind::Random => {
            let why = "by --kind random";
            reject("--relation", args.relation.is_some(), why)?;
            reject_pair_params(args, why)?;
            reject_stack_params(args, why)?;
            reject("--noise-level", args.noise_level.is_some(), why)?;
            let x = gen_random(args.n, args.p, seed)?;
            let names = vec!["x.rsm".to_string()];
            write_layers(&args.out, &names, std::slice::from_ref(&x))?;
            let manifest = json!({
                "kind": "random",
                "n": args.n,
                "p": args.p,
                "seed": seed,
                "format": "rsm-binary",
                "layers": names,
            });
            write_manifest(&args.out, &manifest)?;
            Ok(manifest)
        }
        GenKind::Pair => gen_pair(args, seed),
        GenKind::Stack => gen_stack(args, seed),
    }
}

fn reject_pair_params(args: &GenArgs, why: &str) -> Result<(), CliError> {
    reject("--alpha", args.alpha.is_some(), why)?;
    reject("--shared-indices", args.shared_indices.is_some(), why)?;
    reject("--spectrum-decay", args.spectrum_decay.is_some(), why)
}

fn reject_stack_params(args: &GenArgs, why: &str) -> Result<(), CliError> {
    reject("--layers", args.layers.is_some(), why)?;
    reject("--networks", args.networks.is_some(), why)?;
    reject("--signal-rank", args.signal_rank.is_some(), why)
}

fn gen_pair(args: &GenArgs, seed: u64) -> Result<Value, CliError> {
    reject_stack_params(args, "by --kind pair")?;
    let kind = args
        .relation
        .ok_or_else(|| CliError::Usage("--kind pair requires --relation".into()))?;
    if kind != RelationKind::IsotropicScale {
        reject("--alpha", args.alpha.is_some(), "by this relation")?;
    }
    if kind != RelationKind::SharedSubspace {
        let why = "by this relation";
        reject("--shared-indices", args.shared_indices.is_some(), why)?;
        reject("--spectrum-decay", args.spectrum_decay.is_some(), why)?;
        reject("--noise-level", args.noise_level.is_some(), why)?;
    }
    let relation = match kind {
        RelationKind::Independent => Relation::Independent,
        RelationKind::OrthogonalTransform => Relation::OrthogonalTransform,
        RelationKind::InvertibleTransform => Relation::InvertibleTransform,
        RelationKind::IsotropicScale => Relation::IsotropicScale {
            alpha: args.alpha.unwrap_or(DEFAULT_ALPHA),
        },
        RelationKind::SharedSubspace => Relation::SharedSubspace {
            shared_indices: args.shared_indices.clone().ok_or_else(|| {
                CliError::Usage("--relation shared-subspace requires --shared-indices".into())
            })?,
            spectrum_decay: args.spectrum_decay.unwrap_or(DEFAULT_SPECTRUM_DECAY),
            noise_level: args.noise_level.unwrap_or(0.0),
        },
    };
    let spec = SynthSpec {
        n: args.n,
        p: args.p,
        seed,
        relation,
    };
    spec.validate()?;
    let names = vec!["x.rsm".to_string(), "y.rsm".to_string()];
    let mut manifest = json!({
        "kind": "pair",
        "n": args.n,
        "p": args.p,
        "seed": seed,
        "relation": spec.relation,
        "format": "rsm-binary",
        "layers": names,
    });
    let (x, y) = if kind == RelationKind::SharedSubspace {
        let pair = gen_shared_subspace_pair(&spec)?;
        manifest["spectrum"] = json!(pair.spectrum);
        (pair.x, pair.y)
    } else {
        let x = gen_random(args.n, args.p, seed)?;
        let relation_seed = derive_seed(seed, 1);
        let out = apply_relation(&x, &spec.relation, relation_seed)?;
        manifest["relation_seed"] = json!(relation_seed);
        manifest["condition_number"] = json!(out.condition_number);
        (x, out.matrix)
    };
    write_layers(&args.out, &names, &[x, y])?;
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

fn gen_stack(args: &GenArgs, seed: u64) -> Result<Value, CliError> {
    let why = "by --kind stack";
    reject("--relation", args.relation.is_some(), why)?;
    reject_pair_params(args, why)?;
    let layers = args.layers.unwrap_or(DEFAULT_LAYERS);
    let networks = args.networks.unwrap_or(DEFAULT_NETWORKS);
    if networks == 0 {
        return Err(CliError::Usage("--networks must be at least 1".into()));
    }
    let structural_seed = derive_seed(seed, 0);
    let names: Vec<String> = (0..layers).map(|l| format!("layer{l:02}.rsm")).collect();
    let mut nets = Vec::with_capacity(networks);
    for k in 0..networks {
        let mut spec = LayerStackSpec::new(layers, args.n, args.p, structural_seed, derive_seed(seed, k as u64 + 1));
        spec.signal_rank = args.signal_rank.unwrap_or(DEFAULT_SIGNAL_RANK);
        spec.noise_level = args.noise_level.unwrap_or(DEFAULT_NOISE_LEVEL);
        let stack = gen_layer_stack(&spec)?;
        let dir_name = format!("net{k:02}");
        let dir = args.out.join(&dir_name);
        write_layers(&dir, &names, &stack)?;
        write_manifest(&dir, &json!({ "layers": names }))?;
        nets.push(json!({ "dir": dir_name, "network_seed": spec.network_seed }));
    }
    let manifest = json!({
        "kind": "stack",
        "n": args.n,
        "p": args.p,
        "seed": seed,
        "layers_per_network": layers,
        "networks": nets,
        "signal_rank": args.signal_rank.unwrap_or(DEFAULT_SIGNAL_RANK),
        "noise_level": args.noise_level.unwrap_or(DEFAULT_NOISE_LEVEL),
        "structural_seed": structural_seed,
        "format": "rsm-binary",
        "files": names,
    });
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}
