//! Resource descriptor files.
//!
//! ```xml
//! <resource id="dlpoly@cluster2" cost="1">
//!   <program name="dlpoly" version="4.10"/>
//!   <calculator name="cluster2" platform="linux-x86_64" max-jobs="2"/>
//!   <capabilities><capability>md</capability></capabilities>
//!   <license kind="academic">citation text</license>
//!   <template platform="linux-x86_64" output="history">
//!     <command>dlpoly -c ${config} -o ${workdir}/HISTORY</command>
//!     <input slot="config" file="CONFIG">
//!       <observable name="helium_positions" unit="Å"/>
//!     </input>
//!   </template>
//! </resource>
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{Calculator, InputSlot, LaunchTemplate, License, LicenseKind, ResourceDescriptor, ResourceError};
use crate::quantities::{ExtractionSpec, Unit};

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> ResourceError {
    ResourceError::InvalidDescriptor(msg.into())
}

fn attr<'a>(n: Node<'a, '_>, name: &str) -> Result<&'a str, ResourceError> {
    n.attribute(name)
        .ok_or_else(|| bad(format!("<{}> is missing attribute {name:?}", n.tag_name().name())))
}

fn child<'a, 'i>(n: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>, ResourceError> {
    n.children()
        .find(|c| c.has_tag_name(name))
        .ok_or_else(|| bad(format!("<{}> is missing <{name}>", n.tag_name().name())))
}

fn check_children(n: Node<'_, '_>, allowed: &[&str]) -> Result<(), ResourceError> {
    for c in n.children().filter(|c| c.is_element()) {
        if !allowed.contains(&c.tag_name().name()) {
            return Err(bad(format!(
                "unexpected <{}> inside <{}>",
                c.tag_name().name(),
                n.tag_name().name()
            )));
        }
    }
    Ok(())
}

/// Parses and validates a descriptor document.
pub fn parse_descriptor(text: &str) -> Result<ResourceDescriptor, ResourceError> {
    let doc = Document::parse(text).map_err(|e| bad(format!("XML: {e}")))?;
    let root = doc.root_element();
    if !root.has_tag_name("resource") {
        return Err(bad(format!("root element must be <resource>, found <{}>", root.tag_name().name())));
    }
    check_children(root, &["program", "calculator", "capabilities", "license", "template"])?;
    let id = attr(root, "id")?.to_string();
    let cost_weight = match root.attribute("cost") {
        Some(c) => c.parse::<f64>().map_err(|_| bad(format!("bad cost {c:?}")))?,
        None => 0.0,
    };

    let program = child(root, "program")?;
    let calc = child(root, "calculator")?;
    let max_jobs = attr(calc, "max-jobs")?;
    let calculator = Calculator {
        name: attr(calc, "name")?.to_string(),
        platform: attr(calc, "platform")?.to_string(),
        max_jobs: max_jobs.parse().map_err(|_| bad(format!("bad max-jobs {max_jobs:?}")))?,
    };

    let caps = child(root, "capabilities")?;
    check_children(caps, &["capability"])?;
    let capabilities: BTreeSet<String> = caps
        .children()
        .filter(|c| c.has_tag_name("capability"))
        .map(|c| c.text().unwrap_or("").trim().to_string())
        .collect();

    let lic = child(root, "license")?;
    let kind_text = attr(lic, "kind")?;
    let license = License {
        kind: LicenseKind::parse(kind_text).ok_or_else(|| bad(format!("unknown license kind {kind_text:?}")))?,
        citation: lic.text().unwrap_or("").trim().to_string(),
    };

    let tpl = child(root, "template")?;
    check_children(tpl, &["command", "input"])?;
    let mut inputs = Vec::new();
    for input in tpl.children().filter(|c| c.has_tag_name("input")) {
        check_children(input, &["observable"])?;
        let slot = attr(input, "slot")?.to_string();
        let file = input.attribute("file").map_or_else(|| format!("{slot}.ds"), str::to_string);
        let wanted = input
            .children()
            .filter(|c| c.has_tag_name("observable"))
            .map(|o| {
                let unit = attr(o, "unit")?;
                Ok((
                    attr(o, "name")?.to_string(),
                    Unit::parse(unit).map_err(|e| bad(e.to_string()))?,
                ))
            })
            .collect::<Result<Vec<_>, ResourceError>>()?;
        let expects = ExtractionSpec::new(wanted).map_err(|e| bad(e.to_string()))?;
        inputs.push(InputSlot { name: slot, file, expects });
    }
    let template = LaunchTemplate {
        command: child(tpl, "command")?.text().unwrap_or("").trim().to_string(),
        inputs,
        output: attr(tpl, "output")?.to_string(),
        platform: tpl.attribute("platform").unwrap_or(&calculator.platform).to_string(),
    };

    let d = ResourceDescriptor {
        id,
        program: attr(program, "name")?.to_string(),
        version: program.attribute("version").unwrap_or("").to_string(),
        calculator,
        capabilities,
        license,
        template,
        cost_weight,
    };
    d.validate()?;
    Ok(d)
}

/// Writes a descriptor in the same document shape `parse_descriptor` reads.
pub fn descriptor_to_xml(d: &ResourceDescriptor) -> String {
    let e = escape_xml;
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(out, "<resource id=\"{}\" cost=\"{}\">", e(&d.id), d.cost_weight);
    let _ = writeln!(out, "  <program name=\"{}\" version=\"{}\"/>", e(&d.program), e(&d.version));
    let _ = writeln!(
        out,
        "  <calculator name=\"{}\" platform=\"{}\" max-jobs=\"{}\"/>",
        e(&d.calculator.name),
        e(&d.calculator.platform),
        d.calculator.max_jobs
    );
    out.push_str("  <capabilities>");
    for c in &d.capabilities {
        let _ = write!(out, "<capability>{}</capability>", e(c));
    }
    out.push_str("</capabilities>\n");
    let _ = writeln!(out, "  <license kind=\"{}\">{}</license>", d.license.kind, e(&d.license.citation));
    let _ = writeln!(
        out,
        "  <template platform=\"{}\" output=\"{}\">",
        e(&d.template.platform),
        e(&d.template.output)
    );
    let _ = writeln!(out, "    <command>{}</command>", e(&d.template.command));
    for slot in &d.template.inputs {
        let _ = writeln!(out, "    <input slot=\"{}\" file=\"{}\">", e(&slot.name), e(&slot.file));
        for (name, unit) in slot.expects.wanted() {
            let _ = writeln!(out, "      <observable name=\"{}\" unit=\"{}\"/>", e(name), e(unit.name()));
        }
        out.push_str("    </input>\n");
    }
    out.push_str("  </template>\n</resource>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GULP: &str = r#"<?xml version="1.0"?>
<resource id="gulp@cluster1" cost="2.5">
  <program name="gulp" version="6.1"/>
  <calculator name="cluster1" platform="linux-x86_64" max-jobs="4"/>
  <capabilities><capability>mc-gcmc</capability><capability>lattice</capability></capabilities>
  <license kind="academic">Gale &amp; Rohl, Mol. Sim. 29 (2003)</license>
  <template output="config">
    <command>gulp &lt; ${occupancy} &gt; ${workdir}/gulp.out -n ${params.n_helium}</command>
    <input slot="occupancy" file="occ.kv">
      <observable name="occupancy" unit="1"/>
      <observable name="cell_length" unit="Å"/>
    </input>
  </template>
</resource>"#;

    #[test]
    fn parses_full_descriptor() {
        let d = parse_descriptor(GULP).unwrap();
        assert_eq!(d.id, "gulp@cluster1");
        assert_eq!(d.program, "gulp");
        assert_eq!(d.calculator.max_jobs, 4);
        assert_eq!(d.cost_weight, 2.5);
        assert_eq!(d.license.kind, LicenseKind::Academic);
        assert_eq!(d.license.citation, "Gale & Rohl, Mol. Sim. 29 (2003)");
        assert_eq!(d.template.platform, "linux-x86_64");
        assert_eq!(d.template.command, "gulp < ${occupancy} > ${workdir}/gulp.out -n ${params.n_helium}");
        assert_eq!(d.template.inputs[0].expects.wanted().len(), 2);
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let d = parse_descriptor(GULP).unwrap();
        assert_eq!(parse_descriptor(&descriptor_to_xml(&d)).unwrap(), d);
    }

    #[test]
    fn undeclared_slot_rejected() {
        let text = GULP.replace("${occupancy}", "${foo}");
        assert!(matches!(parse_descriptor(&text), Err(ResourceError::InvalidDescriptor(m)) if m.contains("foo")));
    }

    #[test]
    fn academic_without_citation_rejected() {
        let text = GULP.replace("Gale &amp; Rohl, Mol. Sim. 29 (2003)", "");
        assert!(parse_descriptor(&text).is_err());
    }

    #[test]
    fn structural_errors() {
        assert!(parse_descriptor("<resource").is_err());
        assert!(parse_descriptor("<job/>").is_err());
        assert!(parse_descriptor(&GULP.replace("max-jobs=\"4\"", "max-jobs=\"0\"")).is_err());
        assert!(parse_descriptor(&GULP.replace("<capability>lattice</capability>", "<bogus/>")).is_err());
        assert!(parse_descriptor(&GULP.replace("kind=\"academic\"", "kind=\"gpl\"")).is_err());
        assert!(parse_descriptor(&GULP.replace("unit=\"Å\"", "unit=\"parsec\"")).is_err());
    }
}
