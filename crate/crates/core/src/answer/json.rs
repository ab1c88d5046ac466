//! JSON answer family: `{"task": "<TASK>", "<items_key>": [{...}, ...]}`.
//!
//! Keys are emitted in sorted order (serde_json's default map), so output is
//! canonical for a given item order.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{FormatSpec, Item, JsonShape, SlotValue, TaskKind};

fn shape(spec: &FormatSpec) -> Result<&JsonShape> {
    spec.json
        .as_ref()
        .ok_or_else(|| Error::config(format!("format {}: json family without shape", spec.name)))
}

pub(crate) fn render(items: &[Item], spec: &FormatSpec) -> Result<String> {
    let shape = shape(spec)?;
    let slots = spec.task.slots();
    let list_slots = spec.task.list_slots();
    let mut arr = Vec::with_capacity(items.len());
    for item in items {
        let mut obj = Map::new();
        for (def, v) in slots.iter().zip(item) {
            match v {
                SlotValue::Text(Some(s)) => {
                    obj.insert(shape.key_for(def.name).to_string(), Value::String(s.clone()));
                }
                SlotValue::Text(None) => {}
                SlotValue::List(pairs) => {
                    let args = pairs
                        .iter()
                        .map(|p| {
                            let mut o = Map::new();
                            for (sd, s) in list_slots.iter().zip(p) {
                                o.insert(shape.key_for(sd.name).to_string(), Value::String(s.clone()));
                            }
                            Value::Object(o)
                        })
                        .collect();
                    obj.insert(shape.key_for(def.name).to_string(), Value::Array(args));
                }
            }
        }
        arr.push(Value::Object(obj));
    }
    let mut root = Map::new();
    root.insert("task".into(), Value::String(spec.task.as_str().into()));
    root.insert(shape.items_key.clone(), Value::Array(arr));
    Ok(format!("{}{}", spec.answer_prefix, Value::Object(root)))
}

/// Parses the first JSON object in `body`.
pub(crate) fn parse(
    body: &str,
    spec: &FormatSpec,
    strict: bool,
) -> Result<(Vec<Item>, Vec<(usize, String)>)> {
    let shape = shape(spec)?;
    let mut problems = Vec::new();
    let Some(start) = body.find('{') else {
        let msg = "no JSON object found".to_string();
        if strict {
            return Err(Error::Parse {
                offset: 0,
                message: msg,
            });
        }
        return Ok((Vec::new(), vec![(0, msg)]));
    };
    let mut stream = serde_json::Deserializer::from_str(&body[start..]).into_iter::<Value>();
    let root = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => {
            let msg = format!("invalid JSON: {e}");
            if strict {
                return Err(Error::Parse {
                    offset: start,
                    message: msg,
                });
            }
            return Ok((Vec::new(), vec![(start, msg)]));
        }
        None => return Ok((Vec::new(), vec![(start, "empty JSON".into())])),
    };
    if strict && !body[start + stream.byte_offset()..].trim().is_empty() {
        return Err(Error::Parse {
            offset: start + stream.byte_offset(),
            message: "trailing text after JSON object".into(),
        });
    }
    let fail = |problems: &mut Vec<(usize, String)>, msg: String| -> Result<()> {
        if strict {
            Err(Error::Parse {
                offset: start,
                message: msg,
            })
        } else {
            problems.push((start, msg));
            Ok(())
        }
    };
    if let Some(task) = root.get("task").and_then(Value::as_str) {
        if task.parse::<TaskKind>().ok() != Some(spec.task) {
            fail(&mut problems, format!("task key is {task:?}, expected {}", spec.task))?;
        }
    }
    let Some(arr) = root.get(&shape.items_key).and_then(Value::as_array) else {
        fail(&mut problems, format!("missing array {:?}", shape.items_key))?;
        return Ok((Vec::new(), problems));
    };
    let slots = spec.task.slots();
    let list_slots = spec.task.list_slots();
    let mut items = Vec::new();
    'items: for (n, obj) in arr.iter().enumerate() {
        let Some(obj) = obj.as_object() else {
            fail(&mut problems, format!("item {n} is not an object"))?;
            continue;
        };
        let mut item = Vec::with_capacity(slots.len());
        for def in slots {
            let key = shape.key_for(def.name);
            match (obj.get(key), def.list) {
                (Some(Value::String(s)), false) => item.push(SlotValue::Text(Some(s.clone()))),
                (None | Some(Value::Null), false) if def.optional => item.push(SlotValue::Text(None)),
                (Some(Value::Array(args)), true) => {
                    let mut pairs = Vec::new();
                    for a in args {
                        let pair: Option<Vec<String>> = list_slots
                            .iter()
                            .map(|sd| a.get(shape.key_for(sd.name)).and_then(Value::as_str).map(str::to_string))
                            .collect();
                        match pair {
                            Some(p) => pairs.push(p),
                            None => fail(&mut problems, format!("item {n}: malformed argument"))?,
                        }
                    }
                    item.push(SlotValue::List(pairs));
                }
                (None, true) => item.push(SlotValue::List(Vec::new())),
                _ => {
                    fail(&mut problems, format!("item {n}: bad or missing key {key:?}"))?;
                    continue 'items;
                }
            }
        }
        if strict {
            let known: Vec<&str> = slots.iter().map(|d| shape.key_for(d.name)).collect();
            if let Some(k) = obj.keys().find(|k| !known.contains(&k.as_str())) {
                fail(&mut problems, format!("item {n}: unknown key {k:?}"))?;
            }
        }
        items.push(item);
    }
    Ok((items, problems))
}
