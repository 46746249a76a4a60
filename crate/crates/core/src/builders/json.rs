//! Instance-file navigation that reports failures with JSON pointers.

use serde_json::Value;

use super::BuildError;

#[derive(Clone, Copy)]
pub(crate) struct At<'a> {
    value: &'a Value,
    parent: Option<&'a At<'a>>,
    key: Option<&'a str>,
    index: Option<usize>,
}

impl<'a> At<'a> {
    pub fn root(value: &'a Value) -> Self {
        At {
            value,
            parent: None,
            key: None,
            index: None,
        }
    }

    pub fn pointer(&self) -> String {
        let mut parts = Vec::new();
        let mut cur = Some(self);
        while let Some(c) = cur {
            if let Some(k) = c.key {
                parts.push(k.replace('~', "~0").replace('/', "~1"));
            } else if let Some(i) = c.index {
                parts.push(i.to_string());
            }
            cur = c.parent;
        }
        parts.reverse();
        parts.iter().map(|p| format!("/{p}")).collect()
    }

    pub fn err<T>(&self, message: impl Into<String>) -> Result<T, BuildError> {
        let pointer = self.pointer();
        Err(BuildError::Schema {
            pointer: if pointer.is_empty() { "/".into() } else { pointer },
            message: message.into(),
        })
    }

    pub fn value(&self) -> &'a Value {
        self.value
    }

    pub fn has(&self, key: &str) -> bool {
        self.value.get(key).is_some()
    }

    pub fn field(&'a self, key: &'a str) -> Result<At<'a>, BuildError> {
        match self.value.get(key) {
            Some(v) => Ok(At {
                value: v,
                parent: Some(self),
                key: Some(key),
                index: None,
            }),
            None => self.err(format!("missing field `{key}`")),
        }
    }

    pub fn opt(&'a self, key: &'a str) -> Option<At<'a>> {
        self.value.get(key).map(|v| At {
            value: v,
            parent: Some(self),
            key: Some(key),
            index: None,
        })
    }

    pub fn items(&'a self) -> Result<Vec<At<'a>>, BuildError> {
        match self.value.as_array() {
            Some(arr) => Ok(arr
                .iter()
                .enumerate()
                .map(|(i, v)| At {
                    value: v,
                    parent: Some(self),
                    key: None,
                    index: Some(i),
                })
                .collect()),
            None => self.err("expected an array"),
        }
    }

    pub fn entries(&'a self) -> Result<Vec<(&'a str, At<'a>)>, BuildError> {
        match self.value.as_object() {
            Some(obj) => Ok(obj
                .iter()
                .map(|(k, v)| {
                    (
                        k.as_str(),
                        At {
                            value: v,
                            parent: Some(self),
                            key: Some(k.as_str()),
                            index: None,
                        },
                    )
                })
                .collect()),
            None => self.err("expected an object"),
        }
    }

    pub fn usize(&self) -> Result<usize, BuildError> {
        match self.value.as_u64() {
            Some(v) => Ok(v as usize),
            None => self.err("expected a non-negative integer"),
        }
    }

    pub fn f64(&self) -> Result<f64, BuildError> {
        match self.value.as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => self.err("expected a number"),
        }
    }

    pub fn bool(&self) -> Result<bool, BuildError> {
        match self.value.as_bool() {
            Some(v) => Ok(v),
            None => self.err("expected a boolean"),
        }
    }

    pub fn str(&self) -> Result<&'a str, BuildError> {
        match self.value.as_str() {
            Some(v) => Ok(v),
            None => self.err("expected a string"),
        }
    }

    pub fn strings(&'a self) -> Result<Vec<String>, BuildError> {
        self.items()?
            .iter()
            .map(|a| a.str().map(str::to_string))
            .collect()
    }

    pub fn numbers(&'a self) -> Result<Vec<f64>, BuildError> {
        self.items()?.iter().map(At::f64).collect()
    }
}

/// Parses one-based agent keys such as `"1"`.
pub(crate) fn agent_key(at: &At<'_>, key: &str, n: usize) -> Result<usize, BuildError> {
    match key.parse::<usize>() {
        Ok(a) if (1..=n).contains(&a) => Ok(a - 1),
        _ => at.err(format!("agent key must be an integer in 1..={n}")),
    }
}

pub(crate) fn parse_json(text: &str) -> Result<Value, BuildError> {
    serde_json::from_str(text).map_err(|e| BuildError::Schema {
        pointer: "/".into(),
        message: format!("not valid JSON: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointers_escape_keys() {
        let v: Value = serde_json::json!({"a/b": [1, {"c~": "x"}]});
        let root = At::root(&v);
        let ab = root.field("a/b").unwrap();
        let items = ab.items().unwrap();
        let inner = items[1].field("c~").unwrap();
        assert_eq!(inner.pointer(), "/a~1b/1/c~0");
        let Err(BuildError::Schema { pointer, .. }) = inner.usize() else {
            panic!("expected schema error")
        };
        assert_eq!(pointer, "/a~1b/1/c~0");
        assert!(matches!(root.field("zzz"), Err(BuildError::Schema { .. })));
    }
}
