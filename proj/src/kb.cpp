#include "met/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "met/error.hpp"

namespace met {

using json = nlohmann::json;

KnowledgeBase::KnowledgeBase(std::vector<Entity> entities, VectorStore images, std::optional<VectorStore> joint)
    : entities_(std::move(entities)), images_(std::move(images)), joint_(std::move(joint))
{
    std::stable_sort(entities_.begin(), entities_.end(), [](const Entity& a, const Entity& b) { return a.id < b.id; });
    images_.seal();
    if (joint_) {
        joint_->seal();
    }
    by_id_.reserve(entities_.size());
    for (std::size_t i = 0; i < entities_.size(); ++i) {
        by_id_.emplace(entities_[i].id, i);
        for (const auto& img : entities_[i].image_ids) {
            image_owner_.emplace(img, i);
        }
    }
}

std::optional<std::size_t> KnowledgeBase::find(const EntityId& id) const
{
    auto it = by_id_.find(id);
    if (it == by_id_.end()) {
        return std::nullopt;
    }
    return it->second;
}

const Entity& KnowledgeBase::at(const EntityId& id) const
{
    auto i = find(id);
    if (!i) {
        throw DataError("unknown entity: " + id.str());
    }
    return entities_[*i];
}

std::optional<std::size_t> KnowledgeBase::image_owner(const ImageId& id) const
{
    auto it = image_owner_.find(id);
    if (it == image_owner_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t KnowledgeBase::gloss_count() const
{
    std::size_t n = 0;
    for (const auto& e : entities_) {
        n += e.glosses.size();
    }
    return n;
}

std::size_t KnowledgeBase::image_count() const
{
    std::size_t n = 0;
    for (const auto& e : entities_) {
        n += e.image_ids.size();
    }
    return n;
}

const std::vector<QueryPair>& Splits::split(std::string_view name) const
{
    if (name == "train") {
        return train;
    }
    if (name == "dev") {
        return dev;
    }
    if (name == "test") {
        return test;
    }
    throw ConfigError("unknown split: " + std::string(name));
}

namespace {

void check_vectors(const VectorStore& store, const char* ns, std::vector<Violation>& out)
{
    for (std::size_t r = 0; r < store.size(); ++r) {
        double sq = 0.0;
        bool finite = true;
        for (float x : store.row(r)) {
            if (!std::isfinite(x)) {
                finite = false;
                break;
            }
            sq += static_cast<double>(x) * x;
        }
        if (!finite) {
            out.push_back({"non-finite component", store.id(r).str(), ns});
        } else if (sq == 0.0) {
            out.push_back({"zero-norm", store.id(r).str(), ns});
        }
    }
}

}  // namespace

std::vector<Violation> validate_kb(const KnowledgeBase& kb, const KbRules& rules)
{
    std::vector<Violation> out;
    std::map<ImageId, std::string> referenced;

    const Entity* prev = nullptr;
    for (const auto& e : kb.entities()) {
        if (e.id.empty()) {
            out.push_back({"empty-id", "", "entity with empty id"});
        }
        if (prev && prev->id == e.id) {
            out.push_back({"duplicate-id", e.id.str(), "entity id appears more than once"});
        }
        prev = &e;
        for (std::size_t g = 0; g < e.glosses.size(); ++g) {
            if (e.glosses[g].empty()) {
                out.push_back({"empty-gloss", e.id.str(), "gloss " + std::to_string(g) + " is empty"});
            }
        }
        if (e.glosses.size() < rules.min_glosses) {
            out.push_back({"min-gloss", e.id.str(),
                           std::to_string(e.glosses.size()) + " glosses, need " + std::to_string(rules.min_glosses)});
        }
        if (e.image_ids.size() < rules.min_images) {
            out.push_back({"min-image", e.id.str(),
                           std::to_string(e.image_ids.size()) + " images, need " + std::to_string(rules.min_images)});
        }
        for (const auto& img : e.image_ids) {
            if (!kb.images().contains(img)) {
                out.push_back({"dangling-image", e.id.str(), "image " + img.str() + " has no vector"});
            }
            auto [it, inserted] = referenced.emplace(img, e.id.str());
            if (!inserted) {
                out.push_back({"shared-image-id", img.str(), "referenced by " + it->second + " and " + e.id.str()});
            }
        }
    }
    for (std::size_t r = 0; r < kb.images().size(); ++r) {
        if (!referenced.contains(kb.images().id(r))) {
            out.push_back({"orphan-vector", kb.images().id(r).str(), "vector not referenced by any entity"});
        }
    }
    check_vectors(kb.images(), "images", out);
    if (kb.joint()) {
        check_vectors(*kb.joint(), "joint", out);
    }
    return out;
}

std::string entity_to_json_line(const Entity& e)
{
    json j;
    j["id"] = e.id.str();
    j["glosses"] = e.glosses;
    auto imgs = json::array();
    for (const auto& i : e.image_ids) {
        imgs.push_back(i.str());
    }
    j["image_ids"] = std::move(imgs);
    return j.dump();
}

namespace {

std::vector<Entity> read_entities(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open entities file: " + path.string());
    }
    std::vector<Entity> entities;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto where = path.string() + ":" + std::to_string(lineno);
        try {
            auto j = json::parse(line);
            Entity e;
            e.id = EntityId(j.at("id").get<std::string>());
            e.glosses = j.at("glosses").get<std::vector<std::string>>();
            for (const auto& s : j.at("image_ids")) {
                e.image_ids.emplace_back(s.get<std::string>());
            }
            if (e.id.empty()) {
                throw DataError(where + ": empty entity id");
            }
            entities.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw DataError(where + ": malformed record: " + ex.what());
        }
    }
    return entities;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw DataError("cannot open for writing: " + path.string());
    }
    for (const auto& l : lines) {
        os << l << '\n';
    }
    if (!os) {
        throw DataError("write failed: " + path.string());
    }
}

}  // namespace

KnowledgeBase load_kb(const std::filesystem::path& dir)
{
    auto entities = read_entities(dir / files::entities);
    auto images = load_vector_store(dir / files::images);
    std::optional<VectorStore> joint;
    if (std::filesystem::exists(dir / files::joint)) {
        joint = load_vector_store(dir / files::joint);
    }

    std::set<EntityId> seen;
    for (const auto& e : entities) {
        if (!seen.insert(e.id).second) {
            throw DataError((dir / files::entities).string() + ": duplicate entity id " + e.id.str());
        }
        for (const auto& img : e.image_ids) {
            if (!images.contains(img)) {
                throw DataError("dangling image id " + img.str() + " referenced by entity " + e.id.str());
            }
        }
    }
    return KnowledgeBase(std::move(entities), std::move(images), std::move(joint));
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::vector<std::string> lines;
    lines.reserve(kb.size());
    for (const auto& e : kb.entities()) {
        lines.push_back(entity_to_json_line(e));
    }
    write_lines(dir / files::entities, lines);
    save_vector_store(kb.images(), dir / files::images);
    if (kb.joint()) {
        save_vector_store(*kb.joint(), dir / files::joint);
    } else {
        std::filesystem::remove(dir / files::joint, ec);
    }
}

void save_splits(const Splits& splits, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    std::vector<std::string> lines;
    std::uint32_t dim = 0;
    std::uint32_t joint_dim = 0;
    for (const auto* part : {&splits.train, &splits.dev, &splits.test}) {
        for (const auto& q : *part) {
            dim = static_cast<std::uint32_t>(q.image_vec.size());
            if (!q.joint_vec.empty()) {
                joint_dim = static_cast<std::uint32_t>(q.joint_vec.size());
            }
        }
    }
    VectorStore images(dim);
    VectorStore joint(joint_dim);
    std::map<ImageId, std::vector<float>> seen;

    const std::pair<const char*, const std::vector<QueryPair>*> parts[] = {
        {"train", &splits.train}, {"dev", &splits.dev}, {"test", &splits.test}};
    for (const auto& [name, part] : parts) {
        for (const auto& q : *part) {
            json j;
            j["split"] = name;
            j["query_id"] = q.query_id;
            j["text"] = q.text;
            j["image_id"] = q.image_id.str();
            j["gold"] = q.gold ? json(q.gold->str()) : json(nullptr);
            lines.push_back(j.dump());

            auto [it, fresh] = seen.emplace(q.image_id, q.image_vec);
            if (!fresh) {
                if (it->second != q.image_vec) {
                    throw DataError("query image " + q.image_id.str() + " appears with two different vectors");
                }
                continue;
            }
            images.add(q.image_id, q.image_vec);
            if (!q.joint_vec.empty()) {
                joint.add(q.image_id, q.joint_vec);
            }
        }
    }
    images.seal();
    joint.seal();
    write_lines(dir / files::splits, lines);
    save_vector_store(images, dir / files::query_images);
    if (joint_dim > 0) {
        save_vector_store(joint, dir / files::query_joint);
    } else {
        std::filesystem::remove(dir / files::query_joint, ec);
    }
}

Splits load_splits(const std::filesystem::path& dir, const KnowledgeBase& kb)
{
    const auto path = dir / files::splits;
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open splits file: " + path.string());
    }
    auto images = load_vector_store(dir / files::query_images);
    std::optional<VectorStore> joint;
    if (std::filesystem::exists(dir / files::query_joint)) {
        joint = load_vector_store(dir / files::query_joint);
    }
    if (!images.empty() && images.dim() != kb.dim()) {
        throw DataError("query vector dimension " + std::to_string(images.dim()) + " does not match KB dimension "
                        + std::to_string(kb.dim()));
    }

    Splits splits;
    for (const auto& e : kb.entities()) {
        splits.kb_entities.push_back(e.id);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto where = path.string() + ":" + std::to_string(lineno);
        QueryPair q;
        std::string split;
        try {
            auto j = json::parse(line);
            split = j.at("split").get<std::string>();
            q.query_id = j.at("query_id").get<std::string>();
            q.text = j.at("text").get<std::string>();
            q.image_id = ImageId(j.at("image_id").get<std::string>());
            if (!j.at("gold").is_null()) {
                q.gold = EntityId(j.at("gold").get<std::string>());
            }
        } catch (const json::exception& ex) {
            throw DataError(where + ": malformed record: " + ex.what());
        }
        auto v = images.lookup(q.image_id);
        if (v.empty()) {
            throw DataError(where + ": query image " + q.image_id.str() + " has no vector");
        }
        q.image_vec.assign(v.begin(), v.end());
        if (joint) {
            auto jv = joint->lookup(q.image_id);
            q.joint_vec.assign(jv.begin(), jv.end());
        }
        if (split == "train") {
            splits.train.push_back(std::move(q));
        } else if (split == "dev") {
            splits.dev.push_back(std::move(q));
        } else if (split == "test") {
            splits.test.push_back(std::move(q));
        } else {
            throw DataError(where + ": unknown split \"" + split + "\"");
        }
    }
    return splits;
}

}  // namespace met
