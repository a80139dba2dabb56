//! Versioned network cache written next to the source map.
//!
//! Layout (JSON, fields in this order):
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "source_hash": "<sha256 hex of the source .osm bytes>",
//!   "origin": {"lat": f64, "lon": f64},
//!   "nodes": [[id, x, y, kind, lat, lon], ...],            // sorted by id
//!   "ways": [{"id", "node_ids", "lanes_forward", "lanes_backward",
//!             "speed_limit", "is_road", "is_building"}, ...], // sorted by id
//!   "relations": [{"id", "members": [{"kind", "reference", "role"}]}],
//!   "intersections": [id, ...]                             // ascending
//! }
//! ```
//!
//! Positions are stored already projected, so loading never re-projects.
//! Floats are written in shortest round-trip form, which makes
//! `write(read(file))` byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_osm, GeoNode, GeoPoint, NodeId, NodeKind, Relation, RoadNetwork, RoadnetError, Way};
use crate::geom::Vec2;

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const CACHE_EXTENSION: &str = "netcache";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub format_version: u32,
    pub source_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheNode(NodeId, f64, f64, NodeKind, f64, f64);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheDocument {
    format_version: u32,
    source_hash: String,
    origin: GeoPoint,
    nodes: Vec<CacheNode>,
    ways: Vec<Way>,
    relations: Vec<Relation>,
    intersections: Vec<NodeId>,
}

/// Hex SHA-256 of the source map bytes.
pub fn source_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `map.osm` → `map.osm.netcache`
pub fn cache_path_for(osm_path: &Path) -> PathBuf {
    let mut name = osm_path.as_os_str().to_owned();
    name.push(".");
    name.push(CACHE_EXTENSION);
    PathBuf::from(name)
}

pub fn write_cache(network: &RoadNetwork, source_hash: &str, path: &Path) -> Result<(), RoadnetError> {
    let doc = CacheDocument {
        format_version: CACHE_FORMAT_VERSION,
        source_hash: source_hash.to_string(),
        origin: network.origin(),
        nodes: network
            .nodes()
            .values()
            .map(|n| CacheNode(n.id, n.pos.x, n.pos.y, n.kind, n.lat, n.lon))
            .collect(),
        ways: network.ways().values().cloned().collect(),
        relations: network.relations().values().cloned().collect(),
        intersections: network.intersections().iter().copied().collect(),
    };
    let mut text = serde_json::to_string(&doc).map_err(|e| RoadnetError::CacheFormat(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads a cache, rejecting documents of another format version.
pub fn read_cache(path: &Path) -> Result<(RoadNetwork, CacheHeader), RoadnetError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| RoadnetError::CacheFormat(e.to_string()))?;
    let version = value.get("format_version").and_then(serde_json::Value::as_u64);
    if version != Some(u64::from(CACHE_FORMAT_VERSION)) {
        return Err(RoadnetError::StaleCache {
            path: path.display().to_string(),
            reason: format!(
                "format version {} does not match supported version {CACHE_FORMAT_VERSION}",
                version.map_or_else(|| "<missing>".to_string(), |v| v.to_string())
            ),
        });
    }
    let doc: CacheDocument =
        serde_json::from_value(value).map_err(|e| RoadnetError::CacheFormat(e.to_string()))?;
    let nodes = doc.nodes.into_iter().map(|CacheNode(id, x, y, kind, lat, lon)| GeoNode {
        id,
        lat,
        lon,
        pos: Vec2::new(x, y),
        kind,
    });
    let network = RoadNetwork::from_parts(doc.origin, nodes, doc.ways, doc.relations)?;
    if !network.intersections().iter().copied().eq(doc.intersections.iter().copied()) {
        return Err(RoadnetError::CacheFormat(
            "stored intersection list disagrees with the way table".into(),
        ));
    }
    Ok((
        network,
        CacheHeader {
            format_version: doc.format_version,
            source_hash: doc.source_hash,
        },
    ))
}

/// Loads a cache and checks that it was produced from `source` bytes.
pub fn read_cache_checked(path: &Path, source: &[u8]) -> Result<RoadNetwork, RoadnetError> {
    let (network, header) = read_cache(path)?;
    let expected = source_hash(source);
    if header.source_hash != expected {
        return Err(RoadnetError::StaleCache {
            path: path.display().to_string(),
            reason: format!("source hash {} does not match current source {expected}", header.source_hash),
        });
    }
    Ok(network)
}

/// Where a loaded network came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSource {
    Cache,
    /// Parsed from XML; a fresh cache was written next to the source.
    Parsed,
}

/// Parses `osm_path` and (re)writes its sibling cache. Returns the cache path.
pub fn convert(osm_path: &Path) -> Result<PathBuf, RoadnetError> {
    let bytes = fs::read(osm_path)?;
    let network = parse_osm(&String::from_utf8_lossy(&bytes))?;
    let out = cache_path_for(osm_path);
    write_cache(&network, &source_hash(&bytes), &out)?;
    Ok(out)
}

/// Loads a `.netcache` file directly, or an OSM file through its sibling
/// cache when that cache is current. A stale or missing cache is rebuilt.
pub fn load_map(path: &Path) -> Result<(RoadNetwork, MapSource), RoadnetError> {
    if path.extension().is_some_and(|e| e == CACHE_EXTENSION) {
        return Ok((read_cache(path)?.0, MapSource::Cache));
    }
    let bytes = fs::read(path)?;
    let cache = cache_path_for(path);
    if cache.exists() {
        match read_cache_checked(&cache, &bytes) {
            Ok(network) => return Ok((network, MapSource::Cache)),
            Err(e) => log::warn!("rebuilding {}: {e}", cache.display()),
        }
    }
    let network = parse_osm(&String::from_utf8_lossy(&bytes))?;
    if let Err(e) = write_cache(&network, &source_hash(&bytes), &cache) {
        log::warn!("could not write {}: {e}", cache.display());
    }
    Ok((network, MapSource::Parsed))
}

#[cfg(test)]
mod tests {
    use super::*;

    const XML: &str = r#"<osm><bounds minlat="0" minlon="0" maxlat="0.002" maxlon="0.002"/>
        <node id="1" lat="0" lon="0"/><node id="2" lat="0" lon="0.001"/>
        <node id="3" lat="0.001" lon="0.001"><tag k="highway" v="traffic_signals"/></node>
        <way id="7"><nd ref="1"/><nd ref="2"/><tag k="highway" v="primary"/></way>
        <way id="8"><nd ref="2"/><nd ref="3"/><tag k="highway" v="primary"/></way>
        <relation id="5"><member type="way" ref="7" role=""/></relation></osm>"#;

    #[test]
    fn round_trip_is_identity_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.osm.netcache");
        let net = parse_osm(XML).unwrap();
        let hash = source_hash(XML.as_bytes());
        write_cache(&net, &hash, &path).unwrap();
        let (loaded, header) = read_cache(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(header.source_hash, hash);
        let first = fs::read(&path).unwrap();
        write_cache(&loaded, &hash, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn tampered_version_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.netcache");
        write_cache(&parse_osm(XML).unwrap(), "abc", &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\":1", "\"format_version\":2");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_cache(&path), Err(RoadnetError::StaleCache { .. })));
    }

    #[test]
    fn changed_source_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.netcache");
        write_cache(&parse_osm(XML).unwrap(), &source_hash(XML.as_bytes()), &path).unwrap();
        assert!(read_cache_checked(&path, XML.as_bytes()).is_ok());
        let newer = XML.replace("0.001\"/>", "0.0011\"/>");
        assert!(matches!(
            read_cache_checked(&path, newer.as_bytes()),
            Err(RoadnetError::StaleCache { .. })
        ));
    }

    #[test]
    fn sibling_path() {
        assert_eq!(cache_path_for(Path::new("maps/city.osm")), PathBuf::from("maps/city.osm.netcache"));
    }

    #[test]
    fn load_map_builds_then_reuses_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let osm = dir.path().join("map.osm");
        fs::write(&osm, XML).unwrap();
        let (first, how) = load_map(&osm).unwrap();
        assert_eq!(how, MapSource::Parsed);
        let (second, how) = load_map(&osm).unwrap();
        assert_eq!(how, MapSource::Cache);
        assert_eq!(first, second);
        let before = fs::read(cache_path_for(&osm)).unwrap();
        assert_eq!(convert(&osm).unwrap(), cache_path_for(&osm));
        assert_eq!(fs::read(cache_path_for(&osm)).unwrap(), before);
        fs::write(&osm, XML.replace("0.001\" lon=\"0.001", "0.0011\" lon=\"0.001")).unwrap();
        assert_eq!(load_map(&osm).unwrap().1, MapSource::Parsed);
    }
}
