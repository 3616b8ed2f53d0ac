#include "dsisearch/docid.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "dsisearch/kmeans.hpp"
#include "dsisearch/rng.hpp"

namespace dsisearch {

using nlohmann::json;

DocIdStrategy strategy_from_string(std::string_view s) {
    if (s == "direct") return DocIdStrategy::kDirect;
    if (s == "clustered") return DocIdStrategy::kClustered;
    throw std::invalid_argument("unknown strategy '" + std::string(s) +
                                "' (valid: direct, clustered)");
}

DocIdStructure structure_from_string(std::string_view s) {
    if (s == "int") return DocIdStructure::kInt;
    if (s == "char") return DocIdStructure::kChar;
    throw std::invalid_argument("unknown structure '" + std::string(s) + "' (valid: int, char)");
}

std::string_view strategy_to_string(DocIdStrategy s) {
    return s == DocIdStrategy::kDirect ? "direct" : "clustered";
}

std::string_view structure_to_string(DocIdStructure s) {
    return s == DocIdStructure::kInt ? "int" : "char";
}

std::string render(const DocId& docid) {
    if (docid.symbols.empty()) throw std::invalid_argument("docid has no symbols");
    std::string out;
    out.reserve(docid.symbols.size());
    for (uint8_t sym : docid.symbols) {
        if (sym > 9) throw std::invalid_argument("docid symbol out of range");
        out.push_back(static_cast<char>((docid.structure == DocIdStructure::kInt ? '0' : 'a') + sym));
    }
    return out;
}

DocId parse(std::string_view s, DocIdStructure structure) {
    if (s.empty()) throw std::invalid_argument("empty docid string");
    DocId docid;
    docid.structure = structure;
    char base = structure == DocIdStructure::kInt ? '0' : 'a';
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c < base || c > base + 9) {
            throw std::invalid_argument("invalid docid character '" + std::string(1, c) +
                                        "' at offset " + std::to_string(i));
        }
        docid.symbols.push_back(static_cast<uint8_t>(c - base));
    }
    return docid;
}

void DocIdAssignment::validate_bijection() const {
    std::set<std::string> seen;
    for (const auto& id : mapping) {
        if (!seen.insert(render(id)).second) {
            throw std::runtime_error("duplicate docid '" + render(id) + "'");
        }
    }
}

uint64_t DocIdAssignment::content_hash() const {
    uint64_t h = 14695981039346656037ull;
    h = splitmix64(h ^ static_cast<uint64_t>(strategy));
    h = splitmix64(h ^ static_cast<uint64_t>(structure));
    for (const auto& id : mapping) h = splitmix64(h ^ fnv1a64(render(id)));
    return h;
}

namespace {

// Decimal digits of value, zero-padded to `width`.
void append_rank_digits(std::vector<uint8_t>& symbols, int64_t value, int width) {
    std::string digits = std::to_string(value);
    for (int i = 0; i < width - static_cast<int>(digits.size()); ++i) symbols.push_back(0);
    for (char c : digits) symbols.push_back(static_cast<uint8_t>(c - '0'));
}

int decimal_width(int64_t max_value) {
    int width = 1;
    while (max_value >= 10) {
        max_value /= 10;
        ++width;
    }
    return width;
}

struct ClusterRecursion {
    const EmbeddingMatrix& emb;
    DocIdAssignment& assignment;
    uint64_t seed;
    int64_t base_threshold;

    void run(const std::vector<int>& members, const std::vector<uint8_t>& path) {
        if (static_cast<int64_t>(members.size()) < base_threshold) {
            // naive base case: zero-padded 2-digit rank by ascending doc_index
            for (size_t r = 0; r < members.size(); ++r) {
                auto& symbols = assignment.mapping[static_cast<size_t>(members[r])].symbols;
                append_rank_digits(symbols, static_cast<int64_t>(r), 2);
            }
            return;
        }

        Eigen::MatrixXd points(static_cast<int64_t>(members.size()), emb.dim());
        for (size_t i = 0; i < members.size(); ++i) {
            points.row(static_cast<int64_t>(i)) = emb.vectors.row(members[i]);
        }
        uint64_t level_seed = seed;
        for (uint8_t sym : path) level_seed = mix_seed(level_seed, sym + 1);
        KMeansResult km = kmeans(points, 10, level_seed);

        int64_t n_clusters = km.centroids.rows();
        if (n_clusters < 2) {
            // indistinguishable points: fall back to ranks wide enough for the set
            int width = decimal_width(static_cast<int64_t>(members.size()) - 1);
            for (size_t r = 0; r < members.size(); ++r) {
                auto& symbols = assignment.mapping[static_cast<size_t>(members[r])].symbols;
                append_rank_digits(symbols, static_cast<int64_t>(r), width);
            }
            return;
        }

        std::vector<std::vector<int>> children(static_cast<size_t>(n_clusters));
        for (size_t i = 0; i < members.size(); ++i) {
            auto label = static_cast<uint8_t>(km.labels[i]);
            assignment.mapping[static_cast<size_t>(members[i])].symbols.push_back(label);
            children[label].push_back(members[i]);
        }
        for (size_t c = 0; c < children.size(); ++c) {
            std::vector<uint8_t> child_path = path;
            child_path.push_back(static_cast<uint8_t>(c));
            run(children[c], child_path);
        }
    }
};

}  // namespace

DocIdAssignment assign_direct(int64_t n_docs, DocIdStructure structure) {
    if (n_docs < 1) throw std::invalid_argument("n_docs must be >= 1");
    DocIdAssignment assignment;
    assignment.strategy = DocIdStrategy::kDirect;
    assignment.structure = structure;
    assignment.mapping.resize(static_cast<size_t>(n_docs));
    int width = decimal_width(n_docs - 1);
    for (int64_t i = 0; i < n_docs; ++i) {
        auto& id = assignment.mapping[static_cast<size_t>(i)];
        id.strategy = DocIdStrategy::kDirect;
        id.structure = structure;
        append_rank_digits(id.symbols, i, width);
    }
    return assignment;
}

DocIdAssignment assign_clustered(const EmbeddingMatrix& emb, uint64_t seed,
                                 DocIdStructure structure, int64_t base_threshold) {
    if (emb.doc_count() < 1) throw std::invalid_argument("embedding matrix is empty");
    DocIdAssignment assignment;
    assignment.strategy = DocIdStrategy::kClustered;
    assignment.structure = structure;
    assignment.mapping.resize(static_cast<size_t>(emb.doc_count()));
    for (auto& id : assignment.mapping) {
        id.strategy = DocIdStrategy::kClustered;
        id.structure = structure;
    }
    std::vector<int> all(static_cast<size_t>(emb.doc_count()));
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    ClusterRecursion rec{emb, assignment, seed, base_threshold};
    rec.run(all, {});
    assignment.validate_bijection();
    return assignment;
}

void DocIdTrie::insert(const std::vector<uint8_t>& symbols, int doc_index) {
    if (symbols.empty()) throw std::invalid_argument("cannot insert an empty docid");
    int cur = 0;
    for (uint8_t sym : symbols) {
        auto it = nodes_[static_cast<size_t>(cur)].children.find(sym);
        if (it == nodes_[static_cast<size_t>(cur)].children.end()) {
            int next = static_cast<int>(nodes_.size());
            nodes_[static_cast<size_t>(cur)].children.emplace(sym, next);
            nodes_.emplace_back();
            cur = next;
        } else {
            cur = it->second;
        }
    }
    if (nodes_[static_cast<size_t>(cur)].doc_index != kNoDoc) {
        throw std::runtime_error("duplicate docid in trie (bijection violated)");
    }
    nodes_[static_cast<size_t>(cur)].doc_index = doc_index;
    ++terminals_;
}

std::vector<std::pair<std::vector<uint8_t>, int>> DocIdTrie::enumerate() const {
    std::vector<std::pair<std::vector<uint8_t>, int>> out;
    std::vector<uint8_t> path;
    auto walk = [&](auto&& self, int node_idx) -> void {
        const Node& n = nodes_[static_cast<size_t>(node_idx)];
        if (n.doc_index != kNoDoc) out.emplace_back(path, n.doc_index);
        for (const auto& [sym, child] : n.children) {
            path.push_back(sym);
            self(self, child);
            path.pop_back();
        }
    };
    walk(walk, 0);
    return out;
}

DocIdTrie build_trie(const DocIdAssignment& assignment) {
    DocIdTrie trie;
    for (size_t d = 0; d < assignment.mapping.size(); ++d) {
        trie.insert(assignment.mapping[d].symbols, static_cast<int>(d));
    }
    return trie;
}

void save_assignment(const DocIdAssignment& assignment, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (size_t d = 0; d < assignment.mapping.size(); ++d) {
        json obj{{"doc_index", static_cast<int>(d)},
                 {"docid", render(assignment.mapping[d])},
                 {"strategy", strategy_to_string(assignment.strategy)},
                 {"structure", structure_to_string(assignment.structure)}};
        out << obj.dump() << '\n';
    }
}

DocIdAssignment load_assignment(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    DocIdAssignment assignment;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj = json::parse(line);
        auto strategy = strategy_from_string(obj.at("strategy").get<std::string>());
        auto structure = structure_from_string(obj.at("structure").get<std::string>());
        if (first) {
            assignment.strategy = strategy;
            assignment.structure = structure;
            first = false;
        } else if (strategy != assignment.strategy || structure != assignment.structure) {
            throw std::runtime_error("mixed strategy/structure in " + path.string());
        }
        int doc_index = obj.at("doc_index").get<int>();
        if (doc_index != static_cast<int>(assignment.mapping.size())) {
            throw std::runtime_error("assignment doc_index not dense at " +
                                     std::to_string(doc_index));
        }
        DocId id = parse(obj.at("docid").get<std::string>(), structure);
        id.strategy = strategy;
        assignment.mapping.push_back(std::move(id));
    }
    if (assignment.mapping.empty()) throw std::runtime_error("empty assignment in " + path.string());
    assignment.validate_bijection();
    return assignment;
}

}  // namespace dsisearch
