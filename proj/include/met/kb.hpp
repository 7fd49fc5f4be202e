#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "met/ids.hpp"
#include "met/vector_store.hpp"

namespace met {

/// One entity of the multimodal knowledge base. Index 0 of each list is the
/// entity's "first" text or image.
struct Entity {
    EntityId id;
    std::vector<std::string> glosses;
    std::vector<ImageId> image_ids;

    friend bool operator==(const Entity&, const Entity&) = default;
};

/// Immutable after construction. Entities are ordered by id ascending.
///
/// Image vectors live in two namespaces: `images` holds the retrieval space
/// (also scored by the image bi-encoder matcher) and the optional `joint`
/// store holds text-image joint-space vectors for the inter-modality matcher.
/// The joint store may cover only a subset of image ids.
class KnowledgeBase {
  public:
    KnowledgeBase() = default;
    KnowledgeBase(std::vector<Entity> entities, VectorStore images, std::optional<VectorStore> joint = std::nullopt);

    std::span<const Entity> entities() const noexcept { return entities_; }
    std::size_t size() const noexcept { return entities_.size(); }
    const Entity& entity(std::size_t index) const { return entities_[index]; }

    std::optional<std::size_t> find(const EntityId& id) const;
    const Entity& at(const EntityId& id) const;

    /// Owning entity of a KB-side image, if any.
    std::optional<std::size_t> image_owner(const ImageId& id) const;

    const VectorStore& images() const noexcept { return images_; }
    const VectorStore* joint() const noexcept { return joint_ ? &*joint_ : nullptr; }
    std::uint32_t dim() const noexcept { return images_.dim(); }

    std::size_t gloss_count() const;
    std::size_t image_count() const;

    friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b)
    {
        return a.entities_ == b.entities_ && a.images_ == b.images_ && a.joint_ == b.joint_;
    }

  private:
    std::vector<Entity> entities_;
    VectorStore images_;
    std::optional<VectorStore> joint_;
    std::unordered_map<EntityId, std::size_t> by_id_;
    std::unordered_map<ImageId, std::size_t> image_owner_;
};

/// A (text, image) query. The image enters as its vector(s); `image_id` is
/// kept so splits can be checked for leaks and reported.
struct QueryPair {
    std::string query_id;
    std::string text;
    ImageId image_id;
    std::vector<float> image_vec;
    std::vector<float> joint_vec;  ///< empty when no joint-space vector exists
    std::optional<EntityId> gold;

    friend bool operator==(const QueryPair&, const QueryPair&) = default;
};

struct Splits {
    std::vector<EntityId> kb_entities;
    std::vector<QueryPair> train;
    std::vector<QueryPair> dev;
    std::vector<QueryPair> test;

    const std::vector<QueryPair>& split(std::string_view name) const;

    friend bool operator==(const Splits&, const Splits&) = default;
};

struct Violation {
    std::string rule;
    std::string subject;
    std::string detail;

    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Thresholds checked by validate_kb. The defaults are the structural
/// invariants; the post-filter form adds the minimum-evidence rule.
struct KbRules {
    std::size_t min_glosses = 1;
    std::size_t min_images = 0;

    static KbRules post_filter(std::size_t min_glosses = 3, std::size_t min_images = 3)
    {
        return {min_glosses, min_images};
    }
};

/// Every broken invariant as data. Rules: empty-id, duplicate-id, empty-gloss,
/// min-gloss, min-image, dangling-image, shared-image-id, orphan-vector,
/// non-finite component, zero-norm.
std::vector<Violation> validate_kb(const KnowledgeBase& kb, const KbRules& rules = {});

// Dataset directory layout:
//   entities.jsonl        one JSON object per line: {"glosses":[...],"id":...,"image_ids":[...]}
//   images.mvec           retrieval / image-matcher vectors
//   joint.mvec            optional joint-space vectors
//   splits.jsonl          {"gold":...,"image_id":...,"query_id":...,"split":...,"text":...}
//   query_images.mvec     vectors of query images
//   query_joint.mvec      optional joint-space vectors of query images
namespace files {
inline constexpr const char* entities = "entities.jsonl";
inline constexpr const char* images = "images.mvec";
inline constexpr const char* joint = "joint.mvec";
inline constexpr const char* splits = "splits.jsonl";
inline constexpr const char* query_images = "query_images.mvec";
inline constexpr const char* query_joint = "query_joint.mvec";
}  // namespace files

KnowledgeBase load_kb(const std::filesystem::path& dir);
void save_kb(const KnowledgeBase& kb, const std::filesystem::path& dir);

Splits load_splits(const std::filesystem::path& dir, const KnowledgeBase& kb);
void save_splits(const Splits& splits, const std::filesystem::path& dir);

std::string entity_to_json_line(const Entity& e);

}  // namespace met
