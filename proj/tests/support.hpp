#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "forumscope/corpus.hpp"
#include "forumscope/synthetic.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("forumscope_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << text;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// The fixed 50-document corpus used by the featurization and embedding
/// checks: thread documents of a small seeded synthetic dump.
inline std::vector<std::string> fifty_doc_corpus() {
    forumscope::synth::Params p;
    p.poc = 17;
    p.weaponization = 17;
    p.exploitation = 16;
    p.seed = 50;
    auto c = forumscope::synth::generate(p);
    for (auto& post : c.posts) post.clean_content = forumscope::normalize_text(post.raw_content);
    std::vector<std::string> docs;
    for (const auto& t : forumscope::assemble_threads(c.posts)) docs.push_back(t.document);
    return docs;
}

}  // namespace testing_support
