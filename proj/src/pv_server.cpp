#include <atomic>
#include <condition_variable>
#include <deque>
#include <list>
#include <thread>

#include "ship/net.hpp"
#include "ship/slow_control.hpp"

namespace ship {

namespace {

struct Connection {
  TcpStream stream;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  bool closing = false;
  std::atomic<bool> finished{false};
  std::thread reader;

  void enqueue(const std::string& line) {
    {
      std::lock_guard lock(mu);
      if (closing) return;
      outbox.push_back(line);
    }
    cv.notify_one();
  }

  void writer_loop() {
    for (;;) {
      std::string line;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return closing || !outbox.empty(); });
        if (outbox.empty()) return;
        line = std::move(outbox.front());
        outbox.pop_front();
      }
      line.push_back('\n');
      try {
        stream.write_all(line);
      } catch (const NetError&) {
        stream.shutdown_both();
        std::lock_guard lock(mu);
        closing = true;
        outbox.clear();
        return;
      }
    }
  }

  void serve(PvTable& table) {
    std::thread writer([this] { writer_loop(); });
    {
      PvSession session(table, [this](const std::string& l) { enqueue(l); });
      LineReader lines(stream);
      std::string line;
      try {
        while (lines.next(line)) {
          if (line.empty()) continue;
          session.handle_line(line);
        }
      } catch (const NetError&) {
      }
    }
    {
      std::lock_guard lock(mu);
      closing = true;  // writer drains what is queued, then exits
    }
    cv.notify_one();
    writer.join();
    stream.shutdown_both();
    finished = true;
  }
};

}  // namespace

struct PvServer::Impl {
  PvTable& table;
  TcpListener listener;
  std::atomic<bool> stopping{false};
  std::mutex conns_mu;
  std::list<std::unique_ptr<Connection>> conns;
  std::thread acceptor;

  Impl(PvTable& t, const std::string& host, std::uint16_t port) : table(t), listener(host, port) {}

  void reap_finished() {
    std::lock_guard lock(conns_mu);
    for (auto it = conns.begin(); it != conns.end();) {
      if ((*it)->finished) {
        (*it)->reader.join();
        it = conns.erase(it);
      } else {
        ++it;
      }
    }
  }

  void accept_loop() {
    while (!stopping) {
      TcpStream s;
      try {
        s = listener.accept(std::chrono::milliseconds(100));
      } catch (const NetError&) {
        reap_finished();
        continue;
      }
      auto conn = std::make_unique<Connection>();
      conn->stream = std::move(s);
      Connection* raw = conn.get();
      {
        std::lock_guard lock(conns_mu);
        conns.push_back(std::move(conn));
      }
      raw->reader = std::thread([this, raw] { raw->serve(table); });
    }
  }
};

PvServer::PvServer(PvTable& table, const std::string& host, std::uint16_t port)
    : impl_(std::make_unique<Impl>(table, host, port)) {
  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
}

PvServer::~PvServer() { stop(); }

std::uint16_t PvServer::port() const { return impl_->listener.port(); }

void PvServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  impl_->acceptor.join();
  impl_->listener.close();
  std::lock_guard lock(impl_->conns_mu);
  for (auto& c : impl_->conns) c->stream.shutdown_both();
  for (auto& c : impl_->conns) c->reader.join();
  impl_->conns.clear();
}

}  // namespace ship
