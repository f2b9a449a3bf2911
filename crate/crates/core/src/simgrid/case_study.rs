use crate::dsl::parse;
use crate::quantities::ExtractionSpec;
use crate::resources::{Calculator, InputSlot, LaunchTemplate, License, LicenseKind, Registry, ResourceDescriptor};
use crate::workflow::WorkflowGraph;

const CASE_STUDY: &str = r#"// Helium diffusion in a zeolite channel co-loaded with a heavy adsorbate.
workflow "helium-zeolite" {
  cite "Desk-scale model: helium self-diffusion in a 1-D channel with immobile co-adsorbate";

  activity lattice {
    program: "izafetch"; actuator: "izafetch@archive"; capabilities: [framework-db]
    params { L: "1000"; spacing: "1.0" }
    outputs: [sites, cell_length]
  }
  activity cbmc {
    program: "bigmac"; capabilities: [cbmc]
    params { theta: "0" }
    inputs { lattice <- lattice { sites: "Å"; cell_length: "Å" } }
    outputs: [occupancy, loading, site_spacing]
  }
  activity gcmc {
    program: "gulp"; capabilities: [gcmc]
    params { W: "1000" }
    inputs { occupancy <- cbmc { occupancy: "1"; site_spacing: "Å" } }
    outputs: [helium_positions]
  }
  activity md {
    capabilities: [md]
    params { T: "200"; timestep: "1.0" }
    inputs {
      config <- gcmc { helium_positions: "Å" }
      obstacles <- cbmc { occupancy: "1"; site_spacing: "Å"; loading: "1" }
    }
    outputs: [trajectory, timestep]
  }
  activity analysis {
    capabilities: [msd-analysis]
    params { d: "1"; fit: "second-half" }
    inputs { traj <- md { trajectory: "Å"; timestep: "ps"; spacing: "Å" } }
    outputs: [msd, D, D_stderr]
  }

  start -> lattice -> cbmc -> gcmc -> md -> analysis -> end;
}
"#;

/// Source text of the case-study workflow.
pub fn case_study_dsl() -> &'static str {
    CASE_STUDY
}

/// lattice -> cbmc -> gcmc -> md -> analysis, using all three binding
/// variants.
pub fn build_case_study() -> WorkflowGraph {
    parse(CASE_STUDY).expect("case study parses")
}

fn slot(name: &str, file: &str, wanted: &[(&str, &str)]) -> InputSlot {
    InputSlot { name: name.into(), file: file.into(), expects: ExtractionSpec::of(wanted).expect("known units") }
}

#[allow(clippy::too_many_arguments)]
fn resource(
    id: &str,
    version: &str,
    max_jobs: u32,
    caps: &[&str],
    license: License,
    command: &str,
    inputs: Vec<InputSlot>,
    output: &str,
    cost: f64,
) -> ResourceDescriptor {
    let (program, calc) = id.split_once('@').expect("program@calculator");
    ResourceDescriptor {
        id: id.into(),
        program: program.into(),
        version: version.into(),
        calculator: Calculator { name: calc.into(), platform: "linux-x86_64".into(), max_jobs },
        capabilities: caps.iter().map(|c| c.to_string()).collect(),
        license,
        template: LaunchTemplate { command: command.into(), inputs, output: output.into(), platform: "linux-x86_64".into() },
        cost_weight: cost,
    }
}

/// The simulated testbed: one resource per case-study stage, plus a second
/// (cheaper) MD host.
pub fn testbed_descriptors() -> Vec<ResourceDescriptor> {
    let dlpoly = |id: &str, cost: f64| {
        resource(
            id,
            "4.09",
            4,
            &["md"],
            License::new(LicenseKind::Academic, "DL_POLY molecular dynamics package, academic license"),
            "DLPOLY.X -c ${config} -o ${obstacles} -n ${params.T} -d ${params.timestep} -w ${workdir}",
            vec![
                slot("config", "CONFIG.xyz", &[("helium_positions", "Å")]),
                slot("obstacles", "FIELD.kv", &[("occupancy", "1"), ("site_spacing", "Å")]),
            ],
            "HISTORY",
            cost,
        )
    };
    vec![
        resource(
            "izafetch@archive",
            "1.0",
            8,
            &["framework-db"],
            License::open(),
            "izafetch --framework TOY --sites ${params.L} --out ${workdir}/sites.csv",
            vec![],
            "sites.csv",
            0.5,
        ),
        resource(
            "bigmac@cluster1",
            "2.0",
            2,
            &["cbmc"],
            License::new(LicenseKind::Academic, "BIGMAC configurational-bias Monte Carlo code, academic license"),
            "bigmac -l ${lattice} -t ${params.theta} -o ${workdir}/occupancy.kv",
            vec![slot("lattice", "lattice.csv", &[("sites", "Å")])],
            "occupancy.kv",
            1.0,
        ),
        resource(
            "gulp@cluster1",
            "6.1",
            2,
            &["gcmc"],
            License::new(LicenseKind::Academic, "GULP General Utility Lattice Program, academic license"),
            "gulp -n ${params.W} < ${occupancy} > ${workdir}/helium.xyz",
            vec![slot("occupancy", "occupancy.kv", &[("occupancy", "1")])],
            "helium.xyz",
            1.0,
        ),
        dlpoly("dlpoly@cluster1", 2.0),
        dlpoly("dlpoly@cluster2", 1.0),
        resource(
            "msdtool@local",
            "0.3",
            1,
            &["msd-analysis"],
            License::open(),
            "msdtool --dim ${params.d} ${traj} > ${workdir}/msd.gfd",
            vec![slot("traj", "HISTORY", &[("trajectory", "Å")])],
            "msd.gfd",
            0.1,
        ),
    ]
}

/// A registry holding [`testbed_descriptors`].
pub fn testbed() -> Registry {
    let r = Registry::new();
    for d in testbed_descriptors() {
        r.register(d).expect("testbed descriptors are valid");
    }
    r
}
