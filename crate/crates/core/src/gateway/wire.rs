//! Line-delimited JSON protocol shared by external model services and the
//! mock server.
//!
//! Request: `{"id":..,"op":"retro"|"forward"|"score"|"classify"|"scscore","inputs":[..],"params":{..}}`
//! Response: `{"id":..,"ok":bool,"result":[..],"error":".."}`
//!
//! | op         | inputs              | params            | result items                         |
//! |------------|---------------------|-------------------|--------------------------------------|
//! | `retro`    | `[target]`          | `{"beams": n}`    | `{precursors, confidence, rank, roles?}` |
//! | `forward`  | precursor molecules | `{"topk": k}`     | `{product, likelihood, rank}`        |
//! | `score`    | precursor molecules | `{"product": p}`  | one number                           |
//! | `classify` | `[reaction]`        | `{}`              | `{superclass, category, named_reaction, label}` |
//! | `scscore`  | molecules           | `{}`              | one number per molecule              |

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    ComplexityModel, ForwardPrediction, ModelError, ModelSuite, PrecursorSet, ReactionClass,
    RetroPrediction,
};
use crate::smiles::CanonicalSmiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Retro,
    Forward,
    Score,
    Classify,
    Scscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub op: Op,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    pub ok: bool,
    #[serde(default)]
    pub result: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn success(id: impl Into<String>, result: Vec<Value>) -> Self {
        Self { id: id.into(), ok: true, result, error: None }
    }

    pub fn failure(id: impl Into<String>, error: &ModelError) -> Self {
        Self { id: id.into(), ok: false, result: Vec::new(), error: Some(error.to_wire()) }
    }

    /// The result array, or the decoded error.
    pub fn into_result(self) -> Result<Vec<Value>, ModelError> {
        if self.ok {
            Ok(self.result)
        } else {
            Err(ModelError::from_wire(self.error.as_deref().unwrap_or("malformed: no error text")))
        }
    }
}

/// One message per line, no trailing newline.
pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("wire messages always serialize")
}

pub fn decode<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T, ModelError> {
    serde_json::from_str(line.trim_end()).map_err(|e| ModelError::MalformedResponse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassItem {
    superclass: u8,
    category: u32,
    named_reaction: u32,
    #[serde(default)]
    label: String,
}

fn malformed(e: impl ToString) -> ModelError {
    ModelError::MalformedResponse(e.to_string())
}

fn items<T: for<'de> Deserialize<'de>>(result: Vec<Value>) -> Result<Vec<T>, ModelError> {
    result.into_iter().map(|v| serde_json::from_value(v).map_err(malformed)).collect()
}

pub fn retro_request(id: String, target: &CanonicalSmiles, beams: usize) -> Request {
    let mut params = Map::new();
    params.insert("beams".into(), beams.into());
    Request { id, op: Op::Retro, inputs: vec![target.to_string()], params }
}

pub fn forward_request(id: String, precursors: &PrecursorSet, topk: usize) -> Request {
    let mut params = Map::new();
    params.insert("topk".into(), topk.into());
    Request { id, op: Op::Forward, inputs: molecules(precursors), params }
}

pub fn score_request(id: String, precursors: &PrecursorSet, product: &CanonicalSmiles) -> Request {
    let mut params = Map::new();
    params.insert("product".into(), product.to_string().into());
    Request { id, op: Op::Score, inputs: molecules(precursors), params }
}

pub fn classify_request(id: String, rxn: &str) -> Request {
    Request { id, op: Op::Classify, inputs: vec![rxn.to_string()], params: Map::new() }
}

pub fn scscore_request(id: String, molecule: &CanonicalSmiles) -> Request {
    Request { id, op: Op::Scscore, inputs: vec![molecule.to_string()], params: Map::new() }
}

fn molecules(set: &PrecursorSet) -> Vec<String> {
    set.molecules().iter().map(ToString::to_string).collect()
}

pub fn parse_retro(result: Vec<Value>) -> Result<Vec<RetroPrediction>, ModelError> {
    let out: Vec<RetroPrediction> = items(result)?;
    for p in &out {
        if p.precursors.is_empty() {
            return Err(malformed("retro prediction without precursors"));
        }
        if let Some(roles) = &p.roles {
            if roles.len() != p.precursors.len() {
                return Err(malformed("roles do not match precursors"));
            }
        }
    }
    Ok(out)
}

pub fn parse_forward(result: Vec<Value>) -> Result<Vec<ForwardPrediction>, ModelError> {
    items(result)
}

fn single_number(result: Vec<Value>) -> Result<f64, ModelError> {
    match result.as_slice() {
        [v] => v.as_f64().ok_or_else(|| malformed("expected a number")),
        _ => Err(malformed(format!("expected one result, got {}", result.len()))),
    }
}

pub fn parse_score(result: Vec<Value>) -> Result<f64, ModelError> {
    single_number(result)
}

pub fn parse_scscore(result: Vec<Value>) -> Result<f64, ModelError> {
    single_number(result)
}

pub fn parse_classify(result: Vec<Value>) -> Result<ReactionClass, ModelError> {
    let mut xs: Vec<ClassItem> = items(result)?;
    if xs.len() != 1 {
        return Err(malformed(format!("expected one class, got {}", xs.len())));
    }
    let item = xs.pop().expect("length checked");
    let mut class = ReactionClass::new(item.superclass, item.category, item.named_reaction).map_err(malformed)?;
    class.label = item.label;
    Ok(class)
}

fn param_usize(req: &Request, key: &str) -> Result<usize, ModelError> {
    req.params
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| ModelError::InvalidRequest(format!("missing integer param {key:?}")))
}

fn canonical_inputs(req: &Request) -> Vec<CanonicalSmiles> {
    req.inputs.iter().map(CanonicalSmiles::from_normalized).collect()
}

fn to_values<T: Serialize>(xs: &[T]) -> Vec<Value> {
    xs.iter().map(|x| serde_json::to_value(x).expect("serializable")).collect()
}

/// Answers one request against in-process models. The mock server and
/// [`super::LocalTransport`] both go through here.
pub fn handle(models: &ModelSuite, complexity: &dyn ComplexityModel, req: &Request) -> Response {
    match dispatch(models, complexity, req) {
        Ok(result) => Response::success(req.id.clone(), result),
        Err(e) => Response::failure(req.id.clone(), &e),
    }
}

fn dispatch(models: &ModelSuite, complexity: &dyn ComplexityModel, req: &Request) -> Result<Vec<Value>, ModelError> {
    match req.op {
        Op::Retro => {
            let [target] = req.inputs.as_slice() else {
                return Err(ModelError::InvalidRequest("retro takes one target".into()));
            };
            let beams = param_usize(req, "beams")?;
            let out = models.retro.retro_predict(&CanonicalSmiles::from_normalized(target.as_str()), beams)?;
            Ok(to_values(&out))
        }
        Op::Forward => {
            let topk = param_usize(req, "topk")?;
            let out = models.forward.forward_predict(&PrecursorSet::new(canonical_inputs(req)), topk)?;
            Ok(to_values(&out))
        }
        Op::Score => {
            let product = req
                .params
                .get("product")
                .and_then(Value::as_str)
                .ok_or_else(|| ModelError::InvalidRequest("missing string param \"product\"".into()))?;
            let l = models.forward.score_reaction(
                &PrecursorSet::new(canonical_inputs(req)),
                &CanonicalSmiles::from_normalized(product),
            )?;
            Ok(vec![l.into()])
        }
        Op::Classify => {
            let [rxn] = req.inputs.as_slice() else {
                return Err(ModelError::InvalidRequest("classify takes one reaction".into()));
            };
            let class = models.classifier.classify(rxn)?;
            let item = ClassItem {
                superclass: class.superclass,
                category: class.category,
                named_reaction: class.named_reaction,
                label: class.label,
            };
            Ok(to_values(&[item]))
        }
        Op::Scscore => canonical_inputs(req)
            .iter()
            .map(|m| complexity.complexity(m).map(Value::from))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn op() -> impl Strategy<Value = Op> {
        prop::sample::select(vec![Op::Retro, Op::Forward, Op::Score, Op::Classify, Op::Scscore])
    }

    fn value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::from),
            any::<i64>().prop_map(Value::from),
            (-1e6f64..1e6).prop_map(Value::from),
            "[ -~]{0,12}".prop_map(Value::from),
        ];
        leaf.prop_recursive(2, 16, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-z]{1,6}", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    prop_compose! {
        fn request()(id in "[a-z0-9-]{1,10}", op in op(), inputs in prop::collection::vec("[!-~]{1,20}", 0..4),
                     params in prop::collection::btree_map("[a-z]{1,6}", value(), 0..3)) -> Request {
            Request { id, op, inputs, params: params.into_iter().collect() }
        }
    }

    prop_compose! {
        fn response()(id in "[a-z0-9-]{1,10}", ok in any::<bool>(), result in prop::collection::vec(value(), 0..4),
                      error in prop::option::of("[ -~]{0,30}")) -> Response {
            Response { id, ok, result, error }
        }
    }

    proptest! {
        #[test]
        fn request_round_trip(req in request()) {
            let line = encode(&req);
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(decode::<Request>(&line).unwrap(), req);
        }

        #[test]
        fn response_round_trip(resp in response()) {
            let line = encode(&resp);
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(decode::<Response>(&line).unwrap(), resp);
        }

        #[test]
        fn likelihoods_survive_the_wire(l in 0.0f64..=1.0) {
            let resp = Response::success("x", vec![l.into()]);
            let back: Response = decode(&encode(&resp)).unwrap();
            prop_assert_eq!(parse_score(back.result).unwrap().to_bits(), l.to_bits());
        }
    }

    #[test]
    fn request_layout() {
        let req = retro_request("r1".into(), &CanonicalSmiles::from_normalized("CCO"), 15);
        assert_eq!(encode(&req), r#"{"id":"r1","op":"retro","inputs":["CCO"],"params":{"beams":15}}"#);
        let resp = Response::failure("r1", &ModelError::Timeout);
        assert_eq!(encode(&resp), r#"{"id":"r1","ok":false,"result":[],"error":"timeout: model call timed out"}"#);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(decode::<Request>("{\"id\":1}"), Err(ModelError::MalformedResponse(_))));
        assert!(matches!(decode::<Request>(r#"{"id":"a","op":"train","inputs":[]}"#), Err(_)));
    }

    #[test]
    fn payload_validation() {
        assert!(parse_score(vec![]).is_err());
        assert!(parse_score(vec!["x".into()]).is_err());
        assert!(parse_classify(vec![serde_json::json!({"superclass": 12, "category": 0, "named_reaction": 0})]).is_err());
        let bad_roles = serde_json::json!({"precursors": ["A"], "roles": ["reactant", "reagent"], "confidence": 1.0, "rank": 1});
        assert!(parse_retro(vec![bad_roles]).is_err());
        let empty = serde_json::json!({"precursors": [], "confidence": 1.0, "rank": 1});
        assert!(parse_retro(vec![empty]).is_err());
    }
}
