use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{JobRequest, LaunchTemplate, ResourceError};
use crate::storage::ResultKey;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Placeholder<'a> {
    Workdir,
    Param(&'a str),
    Slot(&'a str),
}

fn is_placeholder_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

/// Splits a command pattern into literal text and `${name}` slots.
fn segments(pattern: &str) -> Result<Vec<Result<&str, &str>>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(start) = rest.find("${") {
        if start > 0 {
            out.push(Ok(&rest[..start]));
        }
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in {pattern:?}"))?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(is_placeholder_char) {
            return Err(format!("bad placeholder ${{{name}}}"));
        }
        out.push(Err(name));
        rest = &after[end + 1..];
    }
    if !rest.is_empty() {
        out.push(Ok(rest));
    }
    Ok(out)
}

pub(crate) fn placeholders(pattern: &str) -> Result<Vec<Placeholder<'_>>, String> {
    Ok(segments(pattern)?
        .into_iter()
        .filter_map(|s| s.err())
        .map(|name| match name {
            "workdir" => Placeholder::Workdir,
            n => match n.strip_prefix("params.") {
                Some(k) => Placeholder::Param(k),
                None => Placeholder::Slot(n),
            },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedInput {
    pub slot: String,
    pub key: ResultKey,
    pub path: String,
}

/// A fully rendered launch: the command line and the files to stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchPlan {
    pub command: String,
    pub workdir: String,
    pub staged: Vec<StagedInput>,
}

/// Substitutes `${...}` slots in `pattern`. Replacement text is inserted
/// verbatim and never rescanned.
pub fn substitute(
    pattern: &str,
    slots: &BTreeMap<String, String>,
    params: &BTreeMap<String, String>,
    workdir: &str,
) -> Result<String, ResourceError> {
    let mut out = String::with_capacity(pattern.len());
    for seg in segments(pattern).map_err(ResourceError::InvalidDescriptor)? {
        match seg {
            Ok(text) => out.push_str(text),
            Err("workdir") => out.push_str(workdir),
            Err(name) => {
                let value = match name.strip_prefix("params.") {
                    Some(k) => params.get(k),
                    None => slots.get(name),
                };
                out.push_str(value.ok_or_else(|| ResourceError::UnboundPlaceholder(name.to_string()))?);
            }
        }
    }
    Ok(out)
}

/// Renders `template` for `req`, staging each input slot as a file under
/// `workdir`.
pub fn render_launch(
    template: &LaunchTemplate,
    req: &JobRequest,
    workdir: &str,
) -> Result<LaunchPlan, ResourceError> {
    let workdir = workdir.trim_end_matches('/');
    let mut staged = Vec::with_capacity(template.inputs.len());
    let mut slots = BTreeMap::new();
    for slot in &template.inputs {
        let key = req
            .inputs
            .get(&slot.name)
            .ok_or_else(|| ResourceError::MissingInput(slot.name.clone()))?;
        let path = format!("{workdir}/{}", slot.file);
        slots.insert(slot.name.clone(), path.clone());
        staged.push(StagedInput { slot: slot.name.clone(), key: key.clone(), path });
    }
    let command = substitute(&template.command, &slots, &req.params, workdir)?;
    Ok(LaunchPlan { command, workdir: workdir.to_string(), staged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantities::ExtractionSpec;
    use crate::resources::InputSlot;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn key(activity: &str) -> ResultKey {
        ResultKey { run: "r".into(), activity: activity.into(), seq: 0, hash: "0".repeat(64) }
    }

    #[test]
    fn direct_substitution() {
        let cmd = substitute("run ${in1} -o ${workdir}/out", &map(&[("in1", "/w/a.dat")]), &map(&[]), "/w").unwrap();
        assert_eq!(cmd, "run /w/a.dat -o /w/out");
    }

    #[test]
    fn param_substitution() {
        let cmd = substitute("md -n ${params.nsteps}", &map(&[]), &map(&[("nsteps", "200")]), "/w").unwrap();
        assert_eq!(cmd, "md -n 200");
    }

    #[test]
    fn substituted_text_is_not_rescanned() {
        let cmd = substitute("echo ${params.x}", &map(&[]), &map(&[("x", "${workdir}")]), "/w").unwrap();
        assert_eq!(cmd, "echo ${workdir}");
    }

    #[test]
    fn unbound_param() {
        assert!(matches!(
            substitute("md ${params.nsteps}", &map(&[]), &map(&[]), "/w"),
            Err(ResourceError::UnboundPlaceholder(n)) if n == "params.nsteps"
        ));
    }

    #[test]
    fn literal_dollar_kept() {
        let cmd = substitute("echo $HOME ${workdir}", &map(&[]), &map(&[]), "/w").unwrap();
        assert_eq!(cmd, "echo $HOME /w");
    }

    #[test]
    fn render_with_missing_slot() {
        let t = LaunchTemplate {
            command: "run ${in1} ${in2}".into(),
            inputs: ["in1", "in2"]
                .iter()
                .map(|n| InputSlot {
                    name: n.to_string(),
                    file: format!("{n}.ds"),
                    expects: ExtractionSpec::new(vec![]).unwrap(),
                })
                .collect(),
            output: "out".into(),
            platform: "any".into(),
        };
        let mut req = JobRequest::new("r", "act", "res");
        req.inputs.insert("in1".into(), key("a"));
        assert!(matches!(render_launch(&t, &req, "/w"), Err(ResourceError::MissingInput(s)) if s == "in2"));
        req.inputs.insert("in2".into(), key("b"));
        let plan = render_launch(&t, &req, "/w/").unwrap();
        assert_eq!(plan.command, "run /w/in1.ds /w/in2.ds");
        assert_eq!(plan.staged.len(), 2);
        assert!(!plan.command.contains("${"));
    }

    #[test]
    fn placeholder_parsing() {
        assert!(placeholders("a ${b").is_err());
        assert!(placeholders("a ${}").is_err());
        assert!(placeholders("a ${x y}").is_err());
        assert_eq!(
            placeholders("${workdir} ${params.k} ${s}").unwrap(),
            vec![Placeholder::Workdir, Placeholder::Param("k"), Placeholder::Slot("s")]
        );
    }
}
