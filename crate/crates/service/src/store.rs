use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use ecoforge_core::model::{parse_document, serialize_model, valid_id, ConceptualModel};

use crate::error::{codes, ApiError};

/// In-memory model store, optionally mirrored to `<dir>/<id>.json`.
#[derive(Debug, Default)]
pub struct ModelStore {
    models: RwLock<BTreeMap<String, ConceptualModel>>,
    dir: Option<PathBuf>,
}

fn storage(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(500, codes::STORAGE, e.to_string())
}

impl ModelStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `*.json` model under `dir`, creating the directory if needed.
    pub fn open(dir: &Path) -> Result<Self, ApiError> {
        std::fs::create_dir_all(dir).map_err(storage)?;
        let mut models = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(storage)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let bytes = std::fs::read(&path).map_err(storage)?;
            let model = parse_document(&bytes).map_err(|e| storage(format!("{}: {e}", path.display())))?;
            models.insert(model.id.clone(), model);
        }
        Ok(ModelStore {
            models: RwLock::new(models),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn list(&self) -> Vec<(String, String)> {
        let models = self.models.read().unwrap();
        models.values().map(|m| (m.id.clone(), m.name.clone())).collect()
    }

    pub fn get(&self, id: &str) -> Result<ConceptualModel, ApiError> {
        self.models
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::model_not_found(id))
    }

    /// Adds a new model; fails if the id is taken.
    pub fn create(&self, model: ConceptualModel) -> Result<(), ApiError> {
        check_id(&model.id)?;
        let mut models = self.models.write().unwrap();
        if models.contains_key(&model.id) {
            return Err(ApiError::new(409, codes::MODEL_EXISTS, format!("model `{}` already exists", model.id)).subject(&model.id));
        }
        self.persist(&model)?;
        models.insert(model.id.clone(), model);
        Ok(())
    }

    /// Replaces an existing model.
    pub fn replace(&self, model: ConceptualModel) -> Result<(), ApiError> {
        let mut models = self.models.write().unwrap();
        if !models.contains_key(&model.id) {
            return Err(ApiError::model_not_found(&model.id));
        }
        self.persist(&model)?;
        models.insert(model.id.clone(), model);
        Ok(())
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let mut models = self.models.write().unwrap();
        if models.remove(id).is_none() {
            return Err(ApiError::model_not_found(id));
        }
        if let Some(dir) = &self.dir {
            std::fs::remove_file(dir.join(format!("{id}.json"))).map_err(storage)?;
        }
        Ok(())
    }

    fn persist(&self, model: &ConceptualModel) -> Result<(), ApiError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", model.id));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serialize_model(model)).map_err(storage)?;
        std::fs::rename(&tmp, &path).map_err(storage)
    }
}

fn check_id(id: &str) -> Result<(), ApiError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(ApiError::new(400, codes::MODEL_ID, format!("model id `{id}` must start with a letter and contain only letters, digits, '-' or '_'")).subject(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(id: &str) -> ConceptualModel {
        ConceptualModel {
            id: id.into(),
            name: "n".into(),
            ..Default::default()
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::open(dir.path()).unwrap();
        store.create(model("a")).unwrap();
        store.create(model("b")).unwrap();
        store.remove("a").unwrap();
        let again = ModelStore::open(dir.path()).unwrap();
        assert_eq!(again.list(), vec![("b".to_string(), "n".to_string())]);
    }

    #[test]
    fn ids_are_checked() {
        let store = ModelStore::in_memory();
        assert_eq!(store.create(model("../x")).unwrap_err().code, codes::MODEL_ID);
        store.create(model("x")).unwrap();
        assert_eq!(store.create(model("x")).unwrap_err().status, 409);
        assert_eq!(store.replace(model("y")).unwrap_err().status, 404);
    }
}
