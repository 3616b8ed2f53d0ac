#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsisearch/embedding.hpp"

namespace dsisearch {

enum class DocIdStrategy { kDirect, kClustered };
enum class DocIdStructure { kInt, kChar };

DocIdStrategy strategy_from_string(std::string_view s);
DocIdStructure structure_from_string(std::string_view s);
std::string_view strategy_to_string(DocIdStrategy s);
std::string_view structure_to_string(DocIdStructure s);

// A document identifier: a non-empty sequence of base-10 symbols with a
// rendering structure (decimal digits, or letters a..j).
struct DocId {
    std::vector<uint8_t> symbols;  // each in 0..9
    DocIdStructure structure = DocIdStructure::kInt;
    DocIdStrategy strategy = DocIdStrategy::kDirect;

    bool operator==(const DocId& other) const {
        return symbols == other.symbols && structure == other.structure;
    }
};

std::string render(const DocId& docid);
// Inverse of render for the given structure; rejects characters outside the
// structure's alphabet with the offending offset.
DocId parse(std::string_view s, DocIdStructure structure);

struct DocIdAssignment {
    std::vector<DocId> mapping;  // indexed by doc_index
    DocIdStrategy strategy = DocIdStrategy::kDirect;
    DocIdStructure structure = DocIdStructure::kInt;

    size_t size() const { return mapping.size(); }
    const DocId& at(int doc_index) const { return mapping.at(static_cast<size_t>(doc_index)); }
    // Throws unless rendered ids are pairwise distinct.
    void validate_bijection() const;
    uint64_t content_hash() const;
};

// doc_index i -> decimal digits of i, zero-padded to a common width.
DocIdAssignment assign_direct(int64_t n_docs, DocIdStructure structure = DocIdStructure::kInt);

// Recursive semantic ids: clusters of fewer than `base_threshold` documents
// take a zero-padded 2-digit rank suffix; larger sets get one k-means symbol
// (k=10) per level, child seeds derived from the recursion path.
DocIdAssignment assign_clustered(const EmbeddingMatrix& emb, uint64_t seed,
                                 DocIdStructure structure = DocIdStructure::kInt,
                                 int64_t base_threshold = 100);

// Prefix trie over docid symbols; terminals carry the doc_index.
class DocIdTrie {
public:
    static constexpr int kNoDoc = -1;

    struct Node {
        std::map<uint8_t, int> children;  // symbol -> node index
        int doc_index = kNoDoc;           // >= 0 iff a docid ends here
    };

    DocIdTrie() : nodes_(1) {}

    void insert(const std::vector<uint8_t>& symbols, int doc_index);
    const Node& node(int index) const { return nodes_[static_cast<size_t>(index)]; }
    int root() const { return 0; }
    size_t node_count() const { return nodes_.size(); }
    size_t terminal_count() const { return terminals_; }

    // All accepted symbol sequences with their doc_index, in trie order.
    std::vector<std::pair<std::vector<uint8_t>, int>> enumerate() const;

private:
    std::vector<Node> nodes_;
    size_t terminals_ = 0;
};

DocIdTrie build_trie(const DocIdAssignment& assignment);

// JSONL {doc_index, docid, strategy, structure}; bit-exact round trip.
void save_assignment(const DocIdAssignment& assignment, const std::filesystem::path& path);
DocIdAssignment load_assignment(const std::filesystem::path& path);

}  // namespace dsisearch
