//! Ready-made liquid sets and test protocols: organic acids at five
//! concentrations, nine fruit juices, eleven red wines, an aged-juice
//! acceptance study, and a generic separable k-class task.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pipeline::derive_seed;
use crate::pipeline_io::{write_recording, DatasetManifest, LabelTable, ManifestRecording, MANIFEST_SCHEMA_VERSION};
use crate::signal_sim::{
    generate_dataset, Acquisition, LiquidProfile, SensorArraySpec, TransientRecording, N_CHANNELS, N_ELECTRODES,
};

/// One reference liquid and the liquids tested against it.
#[derive(Debug, Clone)]
pub struct RunGroup {
    pub reference: LiquidProfile,
    pub tests: Vec<LiquidProfile>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub array: SensorArraySpec,
    pub groups: Vec<RunGroup>,
}

/// Array with random per-electrode sensitivities (±`scale` mV/decade),
/// time constants in 3–8 s and baselines within ±20 mV.
pub fn random_array(analytes: &[&str], scale: f64, noise_sigma_mv: f64, seed: u64) -> SensorArraySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let electrodes: Vec<Vec<f64>> = (0..N_ELECTRODES)
        .map(|_| analytes.iter().map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    let tau = (0..N_CHANNELS).map(|_| rng.random_range(3.0..8.0)).collect();
    let mut array = SensorArraySpec::from_electrodes(analytes.iter().map(|a| a.to_string()).collect(), &electrodes, tau)
        .expect("generated array is well-formed");
    array.baseline_mv = (0..N_CHANNELS).map(|_| rng.random_range(-20.0..20.0)).collect();
    array.with_noise(noise_sigma_mv)
}

/// Purchase criterion: accepted when at least half of the panel is in favour.
pub fn purchase_label(votes_in_favour: u32, panel_size: u32) -> &'static str {
    if 2 * votes_in_favour >= panel_size {
        "accepted"
    } else {
        "rejected"
    }
}

/// Alcohol class of a wine: low for 12.5–13.5 vol%, high for 14–16.5 vol%.
pub fn alcohol_class(vol_pct: f64) -> Result<&'static str> {
    if (12.5..=13.5).contains(&vol_pct) {
        Ok("low")
    } else if (14.0..=16.5).contains(&vol_pct) {
        Ok("high")
    } else {
        Err(Error::Argument(format!("{vol_pct} vol% is outside both alcohol classes")))
    }
}

pub const ACIDS: [&str; 3] = ["acetic", "citric", "lactic"];
pub const ACID_CONCENTRATIONS: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
pub const ACID_REFERENCE: f64 = 1e-3;

/// Each acid at five concentrations against a 1 mM solution of the same acid.
/// Labels: `acid`, `concentration_m`.
pub fn acids(noise_sigma_mv: f64, seed: u64) -> Scenario {
    let array = random_array(&ACIDS, 4.0, noise_sigma_mv, seed);
    let background = |id: String| {
        ACIDS
            .iter()
            .fold(LiquidProfile::new(id), |p, a| p.with(a, ACID_REFERENCE))
    };
    let groups = ACIDS
        .iter()
        .map(|acid| RunGroup {
            reference: background(format!("{acid}@ref")),
            tests: ACID_CONCENTRATIONS
                .iter()
                .map(|&c| {
                    background(format!("{acid}@{c:e}"))
                        .with(acid, c)
                        .label("acid", *acid)
                        .label("concentration_m", format!("{c:e}"))
                })
                .collect(),
        })
        .collect();
    Scenario {
        name: "acids".into(),
        array,
        groups,
    }
}

const JUICE_ANALYTES: [&str; 6] = ["citric", "malic", "ascorbic", "sugars", "potassium", "phenolics"];

/// Nine juices tested against a second lot of Orange1.
/// Labels: `juice_type`, `orange_flavor`.
pub fn juices(noise_sigma_mv: f64, seed: u64) -> Scenario {
    let array = random_array(&JUICE_ANALYTES, 6.0, noise_sigma_mv, seed);
    //                 citric  malic   ascorbic sugars potassium phenolics
    let table: [(&str, bool, [f64; 6]); 9] = [
        ("Orange1", true, [5.0e-2, 1.0e-2, 2.5e-3, 0.50, 1.0e-2, 1.0e-3]),
        ("Orange2", true, [4.2e-2, 1.2e-2, 2.0e-3, 0.55, 1.2e-2, 0.8e-3]),
        ("Orange3", true, [4.0e-2, 1.3e-2, 1.8e-3, 0.56, 1.25e-2, 0.75e-3]),
        ("Orange4", true, [5.3e-2, 0.95e-2, 2.7e-3, 0.48, 0.95e-2, 1.1e-3]),
        ("OrangePassion", false, [4.6e-2, 1.5e-2, 2.2e-3, 0.52, 1.1e-2, 1.4e-3]),
        ("Pear", false, [0.5e-2, 2.0e-2, 0.3e-3, 0.60, 0.8e-2, 0.5e-3]),
        ("Peach", false, [1.2e-2, 2.6e-2, 0.6e-3, 0.45, 1.4e-2, 0.9e-3]),
        ("Apricot", false, [1.8e-2, 3.0e-2, 0.8e-3, 0.42, 2.2e-2, 1.2e-3]),
        ("Multivitamin", false, [3.0e-2, 1.8e-2, 6.0e-3, 0.58, 1.6e-2, 2.0e-3]),
    ];
    let profile = |id: &str, conc: &[f64; 6]| {
        JUICE_ANALYTES
            .iter()
            .zip(conc)
            .fold(LiquidProfile::new(id), |p, (a, c)| p.with(a, *c))
    };
    let reference = profile("Orange1-reference", &table[0].2);
    let tests = table
        .iter()
        .map(|(id, orange, conc)| {
            profile(id, conc)
                .label("juice_type", *id)
                .label("orange_flavor", if *orange { "orange" } else { "other" })
        })
        .collect();
    Scenario {
        name: "juices".into(),
        array,
        groups: vec![RunGroup { reference, tests }],
    }
}

const WINE_ANALYTES: [&str; 6] = ["tartaric", "malic", "lactic", "ethanol", "tannins", "potassium"];

/// Eleven red wines tested against a second bottle of P.d.T.
/// Labels: `wine`, `wine_origin`, `wine_alcohol`.
pub fn wines(noise_sigma_mv: f64, seed: u64) -> Scenario {
    let array = random_array(&WINE_ANALYTES, 6.0, noise_sigma_mv, seed);
    // (name, region, vol%, regional offset index)
    let table: [(&str, &str, f64); 11] = [
        ("Valpolicella", "Veneto", 12.5),
        ("Profasio", "Veneto", 13.5),
        ("P.d.T.", "Veneto", 13.5),
        ("Amarone", "Veneto", 15.5),
        ("Barbera", "Piedmont", 13.5),
        ("Barolo", "Piedmont", 14.5),
        ("Nebbiolo", "Piedmont", 14.0),
        ("Chianti", "Tuscany", 13.0),
        ("Brunello", "Tuscany", 14.5),
        ("Nero d'Avola", "Other", 14.0),
        ("Schiava", "Other", 12.5),
    ];
    let region_center = |region: &str| -> [f64; 6] {
        // tartaric, malic, lactic, tannins, potassium (ethanol from vol%)
        match region {
            "Veneto" => [2.0e-2, 1.0e-3, 1.5e-2, 0.0, 2.0e-3, 2.0e-2],
            "Piedmont" => [2.6e-2, 2.5e-3, 1.0e-2, 0.0, 3.5e-3, 1.6e-2],
            "Tuscany" => [1.6e-2, 1.5e-3, 2.2e-2, 0.0, 3.0e-3, 2.6e-2],
            _ => [3.0e-2, 0.6e-3, 0.7e-2, 0.0, 1.2e-3, 1.2e-2],
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 11));
    let wine_profiles: Vec<LiquidProfile> = table
        .iter()
        .map(|(name, region, vol)| {
            let center = region_center(region);
            // ethanol molarity ≈ vol% · 10 mL/L · 0.789 g/mL / 46.07 g/mol
            let ethanol = vol * 10.0 * 0.789 / 46.07;
            let mut p = LiquidProfile::new(*name);
            for (i, a) in WINE_ANALYTES.iter().enumerate() {
                let base = if *a == "ethanol" { ethanol } else { center[i] };
                let spread = if *a == "ethanol" { 1.0 } else { 10f64.powf(rng.random_range(-0.12..0.12)) };
                p = p.with(a, base * spread);
            }
            p.label("wine", *name)
                .label("wine_origin", *region)
                .label("wine_alcohol", alcohol_class(*vol).expect("table values are classed"))
        })
        .collect();
    let mut reference = wine_profiles[2].clone();
    reference.id = "P.d.T.-reference".into();
    reference.class_labels.clear();
    Scenario {
        name: "wines".into(),
        array,
        groups: vec![RunGroup {
            reference,
            tests: wine_profiles,
        }],
    }
}

/// Orange juice stored in the refrigerator (also the reference), at room
/// temperature and at 40 °C, with sensory-panel votes out of 12.
/// Labels: `storage`, `acceptance`.
pub fn aging(noise_sigma_mv: f64, seed: u64) -> Scenario {
    const PANEL: u32 = 12;
    let analytes = ["ascorbic", "hmf", "citric", "sugars"];
    let array = random_array(&analytes, 6.0, noise_sigma_mv, seed);
    // (id, days, first-order ascorbic decay per day, HMF growth per day, votes in favour)
    let table: [(&str, f64, f64, f64, u32); 9] = [
        ("fridge", 0.0, 0.0, 0.0, 11),
        ("room-10d", 10.0, 0.01, 0.5, 10),
        ("room-20d", 20.0, 0.01, 0.5, 9),
        ("room-40d", 40.0, 0.01, 0.5, 7),
        ("room-50d", 50.0, 0.01, 0.5, 4),
        ("40C-10d", 10.0, 0.04, 3.0, 8),
        ("40C-20d", 20.0, 0.04, 3.0, 5),
        ("40C-40d", 40.0, 0.04, 3.0, 2),
        ("40C-50d", 50.0, 0.04, 3.0, 1),
    ];
    let juice = |id: &str, days: f64, decay: f64, growth: f64| {
        LiquidProfile::new(id)
            .with("ascorbic", 2.5e-3 * (-decay * days).exp())
            .with("hmf", 1e-6 * (1.0 + growth * days))
            .with("citric", 5e-2)
            .with("sugars", 0.5 * (1.0 - 0.001 * days))
    };
    let tests = table
        .iter()
        .map(|(id, days, decay, growth, votes)| {
            juice(id, *days, *decay, *growth)
                .label("storage", *id)
                .label("acceptance", purchase_label(*votes, PANEL))
        })
        .collect();
    Scenario {
        name: "aging".into(),
        array,
        groups: vec![RunGroup {
            reference: juice("fridge-reference", 0.0, 0.0, 0.0),
            tests,
        }],
    }
}

/// `n_classes` liquids whose noiseless channel asymptotes are at least
/// `separation × noise_sigma_mv` apart (Euclidean, over the 15 channels),
/// with the closest pair exactly at that distance. Label: `class`.
pub fn separable_task(n_classes: usize, separation: f64, noise_sigma_mv: f64, seed: u64) -> Result<Scenario> {
    if n_classes < 2 {
        return Err(Error::Argument("need at least 2 classes".into()));
    }
    let names: Vec<String> = (0..n_classes).map(|c| format!("a{c}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let array = random_array(&refs, 5.0, noise_sigma_mv, seed);
    let column = |c: usize| -> Vec<f64> { array.cross_sensitivity.iter().map(|r| r[c]).collect() };
    let mut min_dist = f64::INFINITY;
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            let d = crate::linalg::squared_distance(&column(a), &column(b)).sqrt();
            min_dist = min_dist.min(d);
        }
    }
    // shift of every class along its own analyte, in decades
    let decades = separation * noise_sigma_mv / min_dist;
    let base = 1e-3;
    let background = |id: String| names.iter().fold(LiquidProfile::new(id), |p, a| p.with(a, base));
    let tests = (0..n_classes)
        .map(|c| {
            let id = format!("class{c:02}");
            background(id.clone())
                .with(&names[c], base * 10f64.powf(decades))
                .label("class", id)
        })
        .collect();
    Ok(Scenario {
        name: "separable".into(),
        array,
        groups: vec![RunGroup {
            reference: background("reference".into()),
            tests,
        }],
    })
}

impl Scenario {
    pub fn test_liquids(&self) -> impl Iterator<Item = &LiquidProfile> {
        self.groups.iter().flat_map(|g| g.tests.iter())
    }

    /// task → sample_id → label, from the test liquids' class labels.
    pub fn label_maps(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for p in self.test_liquids() {
            for (task, label) in &p.class_labels {
                out.entry(task.clone()).or_default().insert(p.id.clone(), label.clone());
            }
        }
        out
    }

    /// Simulates `repeats` recordings per test liquid, group by group.
    pub fn generate(
        &self,
        repeats: usize,
        randomize_order: bool,
        acquisition: &Acquisition,
        seed: u64,
    ) -> Result<Vec<TransientRecording>> {
        let mut out = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            let mut profiles = vec![group.reference.clone()];
            profiles.extend(group.tests.iter().cloned());
            out.extend(generate_dataset(
                &self.array,
                &profiles,
                &group.reference.id,
                repeats,
                randomize_order,
                acquisition,
                derive_seed(seed, g as u64),
            )?);
        }
        Ok(out)
    }

    /// Writes recordings (`rec_NNNN.csv` + sidecars), `array.json`,
    /// `profiles.json` and `manifest.json` into `dir`.
    pub fn write_to(
        &self,
        dir: &Path,
        repeats: usize,
        acquisition: &Acquisition,
        seed: u64,
    ) -> Result<DatasetManifest> {
        fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let recordings = self.generate(repeats, true, acquisition, seed)?;
        let mut entries = Vec::with_capacity(recordings.len());
        for (i, rec) in recordings.iter().enumerate() {
            let name = format!("rec_{i:04}.csv");
            write_recording(rec, &dir.join(&name))?;
            entries.push(ManifestRecording {
                path: name.into(),
                sample_id: rec.test_liquid_id.clone(),
                reference_liquid_id: rec.reference_liquid_id.clone(),
            });
        }
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            recordings: entries,
            tasks: self
                .label_maps()
                .into_iter()
                .map(|(t, m)| (t, m.into_iter().collect::<LabelTable>()))
                .collect(),
            notes: Some(format!(
                "synthetic '{}' scenario, {repeats} repeats per liquid, seed {seed}",
                self.name
            )),
        };
        manifest.write(&dir.join("manifest.json"))?;
        write_json(&dir.join("array.json"), &self.array)?;
        let profiles: Vec<&LiquidProfile> = self
            .groups
            .iter()
            .flat_map(|g| std::iter::once(&g.reference).chain(&g.tests))
            .collect();
        write_json(&dir.join("profiles.json"), &profiles)?;
        Ok(manifest)
    }
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| crate::Error::io(path, e))
}
