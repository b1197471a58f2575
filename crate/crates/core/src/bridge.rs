//! Prompting a text-generation provider for VL and validating its answer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::model::{validate, Node};
use crate::parser::parse;

pub const VL_MARKER: &str = "visual_language:";
pub const DEFAULT_MAX_RETRIES: usize = 3;

const PROMPT_HEAD: &str = "You are an expert in converting math word problems into a structured 'visual language'. Your task is to generate a visual language expression based on the given math word problem.

**Background Information**  
You should use the following fixed format for each problem:
<operation>(
    container1[entity_name: <name>, entity_type: <type>, entity_quantity: <number>, container_name: <container>, container_type: <container type>, attr_name: <attr>, attr_type: <attr type>],
    container2[entity_name: <name>, entity_type: <type>, entity_quantity: <number>, container_name: <container>, container_type: <container type>, attr_name: <attr>, attr_type: <attr type>],
    result_container[entity_name: <name>, entity_type: <type>, entity_quantity: <number>, container_name: <container>, container_type: <container type>, attr_name: <attr>, attr_type: <attr type>]
)

operation can be \"addition\", \"subtraction\", \"multiplication\", \"division\", \"surplus\", \"area\", \"comparison\", or \"unittrans\".

Each container has the attributes: entity_name, entity_type, entity_quantity, container_name, container_type, attr_name, attr_type.  
For example, a girl named Lucy may be represented as:  
entity_name: Lucy, entity_type: girl.  

The optional attributes container_name, container_type, attr_name, and attr_type allow extended descriptions.  
In the MWP description \"Jake picked up three apples in the morning...\", the container1 could be:  
entity_name: apple, entity_type: apple, entity_quantity: 3, container_name: Jake, container_type: boy, attr_name: morning, attr_type: morning.  
These additional attributes are not fixed and may vary according to different interpretations.

Example of Visual Languages:";

const PROMPT_TAIL: &str = "Once you are ready to perform the task, you may write down your thought process, but please ensure that you provide the final visual language expression in the following format at the end:

visual_language: <the visual language result>  
";

/// Built-in in-context examples, one per operation kind.
pub const DEFAULT_EXAMPLES: [&str; 8] = [
    "addition(container1[entity_name: orange, entity_type: orange, entity_quantity: 9, container_name: Janet, container_type: girl, attr_name: , attr_type: ], container2[entity_name: orange, entity_type: orange, entity_quantity: 7, container_name: Sharon, container_type: girl, attr_name: , attr_type: ], result_container[entity_name: orange, entity_type: orange, entity_quantity: 16, container_name: Janet and Sharon, container_type: girl, attr_name: , attr_type: ])",
    "subtraction(container1[entity_name: apple, entity_type: apple, entity_quantity: 8, container_name: Tom, container_type: boy, attr_name: , attr_type: ], container2[entity_name: apple, entity_type: apple, entity_quantity: 3, container_name: Tom, container_type: boy, attr_name: eaten, attr_type: ], result_container[entity_name: apple, entity_type: apple, entity_quantity: 5, container_name: Tom, container_type: boy, attr_name: left, attr_type: ])",
    "multiplication(container1[entity_name: box, entity_type: box, entity_quantity: 3, container_name: shelf, container_type: shelf, attr_name: , attr_type: ], container2[entity_name: pencil, entity_type: pencil, entity_quantity: 4, container_name: box, container_type: box, attr_name: , attr_type: ], result_container[entity_name: pencil, entity_type: pencil, entity_quantity: 12, container_name: shelf, container_type: shelf, attr_name: , attr_type: ])",
    "division(container1[entity_name: cookie, entity_type: cookie, entity_quantity: 12, container_name: jar, container_type: jar, attr_name: , attr_type: ], container2[entity_name: friend, entity_type: child, entity_quantity: 4, container_name: , container_type: , attr_name: , attr_type: ], result_container[entity_name: cookie, entity_type: cookie, entity_quantity: 3, container_name: friend, container_type: child, attr_name: each, attr_type: ])",
    "surplus(container1[entity_name: marble, entity_type: marble, entity_quantity: 14, container_name: bag, container_type: bag, attr_name: , attr_type: ], container2[entity_name: marble, entity_type: marble, entity_quantity: 4, container_name: cup, container_type: cup, attr_name: , attr_type: ], result_container[entity_name: marble, entity_type: marble, entity_quantity: 2, container_name: bag, container_type: bag, attr_name: left over, attr_type: ])",
    "area(container1[entity_name: meter, entity_type: meter, entity_quantity: 6, container_name: garden, container_type: garden, attr_name: length, attr_type: ], container2[entity_name: meter, entity_type: meter, entity_quantity: 4, container_name: garden, container_type: garden, attr_name: width, attr_type: ], result_container[entity_name: square meter, entity_type: square meter, entity_quantity: 24, container_name: garden, container_type: garden, attr_name: area, attr_type: ])",
    "comparison(container1[entity_name: sticker, entity_type: sticker, entity_quantity: 9, container_name: Ann, container_type: girl, attr_name: , attr_type: ], container2[entity_name: sticker, entity_type: sticker, entity_quantity: 5, container_name: Ben, container_type: boy, attr_name: , attr_type: ], result_container[entity_name: sticker, entity_type: sticker, entity_quantity: 4, container_name: Ann, container_type: girl, attr_name: more, attr_type: ])",
    "unittrans(container1[entity_name: hour, entity_type: clock, entity_quantity: 2, container_name: trip, container_type: car, attr_name: , attr_type: ], container2[entity_name: minute, entity_type: clock, entity_quantity: 60, container_name: hour, container_type: clock, attr_name: , attr_type: ], result_container[entity_name: minute, entity_type: clock, entity_quantity: 120, container_name: trip, container_type: car, attr_name: , attr_type: ])",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub mwp_text: String,
    pub solution_expression: Option<String>,
    pub in_context_examples: Vec<String>,
    /// Total number of provider calls allowed; 0 is treated as 1.
    pub max_retries: usize,
}

impl GenerationRequest {
    /// A request using [`DEFAULT_EXAMPLES`].
    pub fn new(mwp_text: impl Into<String>) -> Self {
        Self {
            mwp_text: mwp_text.into(),
            solution_expression: None,
            in_context_examples: DEFAULT_EXAMPLES.iter().map(|s| s.to_string()).collect(),
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn with_expression(mut self, expression: impl Into<String>) -> Self {
        self.solution_expression = Some(expression.into());
        self
    }

    pub fn check(&self) -> Result<(), BridgeError> {
        if self.mwp_text.trim().is_empty() {
            return Err(BridgeError::InvalidRequest("empty word problem text".to_string()));
        }
        for (i, example) in self.in_context_examples.iter().enumerate() {
            if let Err(e) = parse(example) {
                return Err(BridgeError::InvalidRequest(format!("in-context example {} does not parse: {e}", i + 1)));
            }
        }
        Ok(())
    }
}

pub fn build_prompt(req: &GenerationRequest) -> String {
    let mut out = String::from(PROMPT_HEAD);
    if req.in_context_examples.is_empty() {
        out.push_str(" ...\n");
    } else {
        out.push('\n');
        for example in &req.in_context_examples {
            out.push_str(example.trim());
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(PROMPT_TAIL);
    let _ = writeln!(out, "Question: {}", req.mwp_text.trim());
    if let Some(expr) = &req.solution_expression {
        let _ = writeln!(out, "Solution expression: {}", expr.trim());
    }
    out
}

/// Text after the last `visual_language:` marker, without surrounding
/// whitespace or code fences.
pub fn extract_vl(response: &str) -> Result<&str, BridgeError> {
    let at = response.rfind(VL_MARKER).ok_or(BridgeError::NoMarker)?;
    let rest = &response[at + VL_MARKER.len()..];
    Ok(rest.trim_matches(|c: char| c.is_whitespace() || c == '`'))
}

/// The prompt for a follow-up attempt after `previous` was rejected.
pub fn retry_prompt(base: &str, previous: &str, reason: &str) -> String {
    format!(
        "{base}\nYour previous answer could not be used: {reason}\nPrevious answer:\n{previous}\nPlease correct it and end with a line of the form\n{VL_MARKER} <the visual language result>\n"
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

pub trait Provider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

pub fn prompt_sha256(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest.iter() {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Canned responses keyed by the SHA-256 of the prompt. Unknown prompts fail.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    responses: BTreeMap<String, String>,
}

impl ReplayProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_hash(&mut self, sha256_hex: impl Into<String>, response: impl Into<String>) {
        self.responses.insert(sha256_hex.into().to_ascii_lowercase(), response.into());
    }

    pub fn insert_prompt(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(prompt_sha256(prompt), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let key = prompt_sha256(prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| ProviderError(format!("no recorded response for prompt {key}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub tree: Node,
    pub attempts: usize,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BridgeError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no visual_language marker")]
    NoMarker,
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("no valid VL after {attempts} attempts: {reason}")]
    Exhausted {
        attempts: usize,
        reason: String,
        last_response: String,
    },
}

/// Why a response was rejected, or the accepted tree.
pub fn accept_response(response: &str) -> Result<Node, String> {
    let text = extract_vl(response).map_err(|e| e.to_string())?;
    let tree = parse(text).map_err(|e| format!("parse error: {e}"))?;
    let report = validate(&tree);
    if let Some(issue) = report.errors().next() {
        return Err(format!("validation error: {issue}"));
    }
    Ok(tree)
}

/// Provider errors abort immediately; rejected answers are retried with the
/// reason appended to the prompt.
pub fn generate_vl(provider: &impl Provider, req: &GenerationRequest) -> Result<Generated, BridgeError> {
    req.check()?;
    let base = build_prompt(req);
    let budget = req.max_retries.max(1);
    let mut prompt = base.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let response = provider.complete(&prompt)?;
        match accept_response(&response) {
            Ok(tree) => {
                return Ok(Generated {
                    tree,
                    attempts,
                    raw_response: response,
                })
            }
            Err(reason) if attempts >= budget => {
                return Err(BridgeError::Exhausted {
                    attempts,
                    reason,
                    last_response: response,
                })
            }
            Err(reason) => prompt = retry_prompt(&base, &response, &reason),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperationKind;

    #[test]
    fn default_examples_cover_every_kind() {
        let mut kinds = Vec::new();
        for text in DEFAULT_EXAMPLES {
            let tree = parse(text).unwrap();
            assert!(validate(&tree).ok(), "{text}");
            assert_eq!(crate::serialize(&tree), text);
            kinds.push(tree.as_op().unwrap().kind);
        }
        assert_eq!(kinds, OperationKind::ALL);
    }

    #[test]
    fn expression_line_only_when_present() {
        let plain = GenerationRequest::new("Tom has 88 apples and eats 44.");
        let with = plain.clone().with_expression("88-44=44");
        let a = build_prompt(&plain);
        let b = build_prompt(&with);
        assert!(!a.contains("Solution expression"));
        assert!(b.ends_with("Solution expression: 88-44=44\n"));
        assert_eq!(b.strip_suffix("Solution expression: 88-44=44\n").unwrap(), a);
        assert_eq!(build_prompt(&plain), a);
        assert!(a.starts_with("You are an expert in converting math word problems"));
        assert!(a.contains("Question: Tom has 88 apples and eats 44.\n"));
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_vl("thinking\nvisual_language: addition(x)").unwrap(), "addition(x)");
        assert_eq!(extract_vl("visual_language: a\nvisual_language: b").unwrap(), "b");
        assert_eq!(extract_vl("visual_language:\n```\nsurplus(y)\n```\n").unwrap(), "surplus(y)");
        assert_eq!(extract_vl("nothing here").unwrap_err().to_string(), "no visual_language marker");
    }

    #[test]
    fn replay_retry_then_success() {
        let req = GenerationRequest::new("Janet has 9 oranges and Sharon has 7.");
        let base = build_prompt(&req);
        let bad = "visual_language: addition(";
        let reason = accept_response(bad).unwrap_err();
        let mut provider = ReplayProvider::new();
        provider.insert_prompt(&base, bad);
        provider.insert_prompt(&retry_prompt(&base, bad, &reason), format!("ok\n{VL_MARKER} {}", DEFAULT_EXAMPLES[0]));
        let out = generate_vl(&provider, &req).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.tree, parse(DEFAULT_EXAMPLES[0]).unwrap());
    }

    #[test]
    fn unknown_prompt_is_an_error() {
        let req = GenerationRequest::new("q");
        let err = generate_vl(&ReplayProvider::new(), &req).unwrap_err();
        assert!(matches!(err, BridgeError::Provider(_)));
    }

    #[test]
    fn invalid_requests() {
        assert!(GenerationRequest::new("  ").check().is_err());
        let mut req = GenerationRequest::new("q");
        req.in_context_examples.push("addition(".into());
        assert!(matches!(req.check(), Err(BridgeError::InvalidRequest(_))));
    }

    #[test]
    fn sha_hex() {
        assert_eq!(
            prompt_sha256("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
